#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <unistd.h>

#include "gasoline/graph.hpp"
#include "gasoline/rng.hpp"

namespace testutil {

// Scratch directory unique to one test case; removed on scope exit.
struct TempDir {
  std::filesystem::path path;

  explicit TempDir(const std::string& name) {
    path = std::filesystem::temp_directory_path() /
           ("gasoline-test-" + name + "-" + std::to_string(::getpid()));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::filesystem::path file(const std::string& name) const { return path / name; }
};

inline void write_file(const std::filesystem::path& p, const std::string& body) {
  std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  out << body;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

// Random sparse undirected graph with dense Gaussian features. Guarantees at
// least one edge so downstream normalization has off-diagonal structure.
inline gasoline::Graph random_graph(int n, double p, std::uint64_t seed, int d = 4) {
  gasoline::SplitMix64 rng(seed);
  gasoline::Graph g;
  g.n = n;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (rng.next_double() < p) g.edges.push_back({i, j});
    }
  }
  if (g.edges.empty() && n >= 2) g.edges.push_back({0, 1});
  g.features = gasoline::Matrix(n, d);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < d; ++k) g.features(i, k) = rng.normal();
  }
  return g;
}

// Labels striping through c classes in adjacent pairs (0,0,1,1,2,2,...), so
// both the even-node training pool and the odd-node test set cover every
// class. Every node is labeled.
inline gasoline::LabelSet cyclic_labels(int n, int c) {
  gasoline::LabelSet ls;
  ls.classes = c;
  ls.label.resize(std::size_t(n));
  for (int i = 0; i < n; ++i) {
    ls.label[std::size_t(i)] = (i / 2) % c;
    if (i % 2 == 0) {
      ls.labeled_set.push_back(i);
    } else {
      ls.test_set.push_back(i);
    }
  }
  return ls;
}

}  // namespace testutil
