#include "seqdenoise/prompt.hpp"

#include <cctype>
#include <map>

#include "seqdenoise/error.hpp"

namespace seqdenoise::prompt {

const std::string_view kInstruction =
    "You are to analyze a list of items provided by a user. Your task is to identify an item "
    "that do not align with the main interests reflected by the majority of the items. After "
    "identifying these noise items, suggest alternative items that better match the user's "
    "interests.";
const std::string_view kInputPreamble = "The user has interacted with the following items before: ";
const std::string_view kNoiseMarker = "Noise Items: \"";
const std::string_view kSuggestMarker = "\", Suggested Items: \"";

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

}  // namespace

std::string describe(std::string_view title, bool* truncated) {
  std::size_t tokens = 0;
  std::size_t i = 0;
  while (i < title.size()) {
    while (i < title.size() && is_space(title[i])) ++i;
    if (i == title.size()) break;
    if (tokens == kMaxTitleTokens) {
      if (truncated) *truncated = true;
      std::string_view head = title.substr(0, i);
      while (!head.empty() && is_space(head.back())) head.remove_suffix(1);
      return std::string(head);
    }
    ++tokens;
    while (i < title.size() && !is_space(title[i])) ++i;
  }
  if (truncated) *truncated = false;
  return std::string(title);
}

std::string escape(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (char c : text) {
    out += c;
    if (c == '"') out += '"';
  }
  return out;
}

std::string quote(std::string_view text) { return "\"" + escape(text) + "\""; }

std::optional<std::string> read_quoted(std::string_view text, std::size_t& pos) {
  if (pos >= text.size() || text[pos] != '"') return std::nullopt;
  std::string out;
  for (std::size_t i = pos + 1; i < text.size(); ++i) {
    if (text[i] != '"') {
      out += text[i];
    } else if (i + 1 < text.size() && text[i + 1] == '"') {
      out += '"';
      ++i;
    } else {
      pos = i + 1;
      return out;
    }
  }
  return std::nullopt;
}

std::string read_until_closing_quote(std::string_view text) {
  std::string out;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] != '"') {
      out += text[i];
    } else if (i + 1 < text.size() && text[i + 1] == '"') {
      out += '"';
      ++i;
    } else {
      break;
    }
  }
  return out;
}

std::string render_input(std::span<const ItemId> items, const ItemCatalog& catalog,
                         std::size_t* truncated) {
  if (items.empty()) throw PreconditionError("cannot render an empty item list");
  std::string out(kInputPreamble);
  for (std::size_t i = 0; i < items.size(); ++i) {
    auto idx = catalog.find(items[i]);
    if (!idx) throw ValidationError("cannot render unknown item '" + items[i] + "'");
    bool cut = false;
    if (i > 0) out += ", ";
    out += quote(describe(catalog.at(*idx).title, &cut));
    if (cut && truncated) ++*truncated;
  }
  return out;
}

std::string render_input(const SequenceWindow& window, const ItemCatalog& catalog) {
  return render_input(std::span<const ItemId>(window.items), catalog);
}

std::optional<std::vector<std::string>> parse_input(std::string_view text) {
  auto at = text.rfind(kInputPreamble);
  if (at == std::string_view::npos) return std::nullopt;
  std::size_t pos = at + kInputPreamble.size();
  std::vector<std::string> titles;
  while (true) {
    auto title = read_quoted(text, pos);
    if (!title) break;
    titles.push_back(std::move(*title));
    if (text.substr(pos, 2) != ", ") break;
    pos += 2;
  }
  return titles;
}

json InstructionExample::to_json() const {
  return json{{"instruction", instruction}, {"input", input}, {"output", output}};
}

std::string render_output(std::string_view noise_title, std::string_view suggestion_title) {
  return "Noise Items: " + quote(noise_title) + ", Suggested Items: " + quote(suggestion_title);
}

std::optional<OutputPair> parse_output(std::string_view output) {
  constexpr std::string_view kNoiseLabel = "Noise Items: ";
  constexpr std::string_view kSuggestLabel = ", Suggested Items: ";
  if (!output.starts_with(kNoiseLabel)) return std::nullopt;
  std::size_t pos = kNoiseLabel.size();
  auto noise = read_quoted(output, pos);
  if (!noise || output.substr(pos, kSuggestLabel.size()) != kSuggestLabel) return std::nullopt;
  pos += kSuggestLabel.size();
  auto suggestion = read_quoted(output, pos);
  if (!suggestion || pos != output.size()) return std::nullopt;
  return OutputPair{std::move(*noise), std::move(*suggestion)};
}

InstructionExample make_example(const CorruptedWindow& corrupted, const ItemCatalog& catalog) {
  if (corrupted.record.origin != CorruptionOrigin::kInstructionCorpus) {
    throw PreconditionError("corpus records must originate from instruction-corpus corruption");
  }
  InstructionExample ex;
  ex.instruction = std::string(kInstruction);
  ex.input = render_input(corrupted.window.inputs(), catalog);
  ex.output = render_output(describe(catalog.title(corrupted.record.noise)),
                            describe(catalog.title(corrupted.record.original)));
  return ex;
}

std::size_t emit_corpus(std::span<const CorruptedWindow> corruptions, const ItemCatalog& catalog,
                        const std::filesystem::path& path) {
  std::string text;
  for (const auto& c : corruptions) {
    text += make_example(c, catalog).to_json().dump();
    text += '\n';
  }
  write_atomic(path, text);
  return corruptions.size();
}

std::string PromptBundle::suggestion_prefix(std::string_view description) const {
  return scoring_prefix + escape(description) + std::string(kSuggestMarker);
}

PromptBundle build_prompt_bundle(const SequenceWindow& window, const ItemCatalog& catalog) {
  PromptBundle bundle;
  bundle.scoring_prefix = std::string(kInstruction) + "\n" + render_input(window.inputs(), catalog) +
                          "\n" + std::string(kNoiseMarker);
  return bundle;
}

std::vector<std::vector<ItemId>> title_collisions(const ItemCatalog& catalog) {
  std::map<std::string, std::vector<ItemId>> by_title;
  for (const auto& e : catalog.entries()) by_title[describe(e.title)].push_back(e.id);
  std::vector<std::vector<ItemId>> out;
  for (auto& [title, ids] : by_title) {
    if (ids.size() > 1) out.push_back(std::move(ids));
  }
  return out;
}

}  // namespace seqdenoise::prompt
