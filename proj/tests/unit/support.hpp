#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "seqdenoise/corpus.hpp"

namespace seqdenoise::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("seqdenoise-test-" + std::to_string(rd()) + "-" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

inline std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

/// Catalog "i0".."i{n-1}" with titles "Title0".. unless given.
inline ItemCatalog numbered_catalog(std::size_t n) {
  ItemCatalog c;
  for (std::size_t i = 0; i < n; ++i) c.add("i" + std::to_string(i), "Title" + std::to_string(i));
  return c;
}

inline SequenceWindow make_window(std::string user, std::vector<ItemId> items,
                                  Split split = Split::kTrain, std::size_t index = 0) {
  SequenceWindow w;
  w.user = std::move(user);
  w.items = std::move(items);
  w.split = split;
  w.window_index = index;
  return w;
}

inline InteractionSequence make_sequence(std::string user, const std::vector<ItemId>& items) {
  InteractionSequence s{std::move(user), {}};
  for (std::size_t i = 0; i < items.size(); ++i) s.events.push_back({items[i], static_cast<Timestamp>(i)});
  return s;
}

}  // namespace seqdenoise::testing
