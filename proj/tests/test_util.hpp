#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "volnet/csv.hpp"
#include "volnet/ingest.hpp"

namespace volnet::test {

inline Timestamp at(std::string_view s) {
  auto t = parse_rfc3339(s);
  if (!t) throw std::runtime_error("bad test timestamp " + std::string(s));
  return *t;
}

inline Timestamp day(int d) { return at("2020-01-06T00:00:00Z") + d * kDay; }

inline Transaction tx(std::string item, std::string lister, std::string collector, Timestamp collected,
                      Seconds lead = Seconds{3600}) {
  return {std::move(item), std::move(lister), std::move(collector), collected - lead, collected};
}

/// Scratch directory under the test working directory, emptied on creation.
inline std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::current_path() / "scratch" / name;
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline std::filesystem::path write_file(const std::filesystem::path& p, const std::string& text) {
  csv::write_text(p, text, "test");
  return p;
}

}  // namespace volnet::test
