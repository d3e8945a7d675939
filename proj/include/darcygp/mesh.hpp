#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace darcygp {

/// Uniform square mesh with d cells (d + 1 nodes) per axis over [0, L]^2.
///
/// Nodes are numbered x-fastest: node(i, j) = j * (d + 1) + i. Cells likewise
/// with d per row.
struct Mesh {
  int d = 32;
  double side_length = 200.0;

  Mesh() = default;
  Mesh(int d_, double side_length_) : d(d_), side_length(side_length_) { validate(); }

  void validate() const {
    if (d < 2) throw std::invalid_argument("mesh needs d >= 2, got " + std::to_string(d));
    if (!(side_length > 0.0)) throw std::invalid_argument("mesh side length must be positive");
  }

  [[nodiscard]] double spacing() const { return side_length / d; }
  [[nodiscard]] int nodes_per_axis() const { return d + 1; }
  [[nodiscard]] std::size_t node_count() const { return std::size_t(d + 1) * std::size_t(d + 1); }
  [[nodiscard]] std::size_t cell_count() const { return std::size_t(d) * std::size_t(d); }
  [[nodiscard]] std::size_t node(int i, int j) const { return std::size_t(j) * (d + 1) + i; }
  [[nodiscard]] std::size_t cell(int i, int j) const { return std::size_t(j) * d + i; }
  [[nodiscard]] double node_x(int i) const { return i * spacing(); }
  [[nodiscard]] double cell_center(int i) const { return (i + 0.5) * spacing(); }

  [[nodiscard]] bool contains(double x, double y) const {
    return x >= 0.0 && x <= side_length && y >= 0.0 && y <= side_length;
  }

  /// True when every node of `coarse` is also a node of this mesh.
  [[nodiscard]] bool refines(const Mesh& coarse) const {
    return coarse.side_length == side_length && d % coarse.d == 0;
  }

  friend bool operator==(const Mesh&, const Mesh&) = default;
};

}  // namespace darcygp
