#ifndef NEUROALIGN_TEST_SUPPORT_HPP
#define NEUROALIGN_TEST_SUPPORT_HPP

#include <filesystem>
#include <string>

#include "neuroalign/corpus.hpp"
#include "neuroalign/util.hpp"

namespace test {

inline std::filesystem::path fixture(const std::string& name) {
  return std::filesystem::path(NEUROALIGN_FIXTURE_DIR) / name;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("neuroalign_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

/// "h>d:label h>d:label ..."
inline std::set<neuroalign::Edge> edges_from(const std::string& spec) {
  std::set<neuroalign::Edge> out;
  for (const auto& item : neuroalign::split_whitespace(spec)) {
    const auto gt = item.find('>');
    const auto colon = item.find(':');
    out.insert({std::stoi(item.substr(0, gt)), std::stoi(item.substr(gt + 1, colon - gt - 1)), item.substr(colon + 1)});
  }
  return out;
}

}  // namespace test

#endif
