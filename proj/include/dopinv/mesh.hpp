#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace dopinv {

using Index = std::int32_t;

/// Thrown for invalid user input (configs, preconditions on arguments).
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Thrown when a numerical procedure fails (singular system, no convergence, ...).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class BoundaryTag : std::uint8_t { Gamma1, DirichletOther, Neumann };

enum class Side : std::uint8_t { Bottom, Right, Top, Left };

std::string to_string(BoundaryTag tag);
std::string to_string(Side side);
BoundaryTag parse_boundary_tag(const std::string& s);
Side parse_side(const std::string& s);

struct Point {
    double x = 0.0;
    double y = 0.0;
};

/// Interval [lo, hi] along one side of the unit square. The coordinate is x
/// for the bottom/top sides and y for the left/right sides.
struct SideInterval {
    Side side = Side::Bottom;
    double lo = 0.0;
    double hi = 1.0;
};

/// Boundary layout of the device. Gamma1 is the measurement contact and
/// always lies on the top side; the remaining Dirichlet contacts are listed
/// in dirichlet_other. Everything else is Neumann.
struct GeometryConfig {
    double gamma1_lo = 0.0;
    double gamma1_hi = 0.5;
    std::vector<SideInterval> dirichlet_other{{Side::Bottom, 0.0, 1.0}};
};

struct BoundaryEdge {
    std::array<Index, 2> nodes{};
    BoundaryTag tag = BoundaryTag::Neumann;
};

/// Structured right-triangle mesh of the unit square. Immutable after
/// construction.
class Mesh {
public:
    [[nodiscard]] int resolution() const noexcept { return n_; }
    [[nodiscard]] Index node_count() const noexcept { return static_cast<Index>(nodes_.size()); }
    [[nodiscard]] Index triangle_count() const noexcept { return static_cast<Index>(triangles_.size()); }

    [[nodiscard]] const std::vector<Point>& nodes() const noexcept { return nodes_; }
    [[nodiscard]] const std::vector<std::array<Index, 3>>& triangles() const noexcept { return triangles_; }
    [[nodiscard]] const std::vector<BoundaryEdge>& boundary_edges() const noexcept { return boundary_edges_; }
    [[nodiscard]] const GeometryConfig& geometry() const noexcept { return geometry_; }

    [[nodiscard]] const Point& node(Index i) const { return nodes_.at(static_cast<std::size_t>(i)); }
    [[nodiscard]] Index node_index(int i, int j) const noexcept { return j * (n_ + 1) + i; }

    /// Signed area of triangle t (positive for every triangle of a valid mesh).
    [[nodiscard]] double area(Index t) const;

    /// True for nodes on a Gamma1 or DirichletOther edge.
    [[nodiscard]] bool is_dirichlet(Index node) const { return dirichlet_[static_cast<std::size_t>(node)] != 0; }
    [[nodiscard]] bool is_boundary(Index node) const { return boundary_[static_cast<std::size_t>(node)] != 0; }

    /// All Dirichlet nodes (Gamma1 and DirichletOther), ascending.
    [[nodiscard]] std::vector<Index> dirichlet_nodes() const;

    /// Boundary nodes in counter-clockwise order starting at (0,0).
    [[nodiscard]] const std::vector<Index>& boundary_loop() const noexcept { return loop_; }

    /// Structural compatibility (same resolution and layout).
    [[nodiscard]] bool same_layout(const Mesh& other) const noexcept;

private:
    friend std::shared_ptr<const Mesh> build_unit_square(int n, const GeometryConfig& config);
    Mesh() = default;

    int n_ = 0;
    GeometryConfig geometry_;
    std::vector<Point> nodes_;
    std::vector<std::array<Index, 3>> triangles_;
    std::vector<BoundaryEdge> boundary_edges_;
    std::vector<Index> loop_;
    std::vector<char> dirichlet_;
    std::vector<char> boundary_;
};

using MeshPtr = std::shared_ptr<const Mesh>;

/// Uniform (n+1)^2-node mesh, each cell split along its (0,0)-(1,1) diagonal.
/// Tag interval endpoints snap to the nearest mesh node.
MeshPtr build_unit_square(int n, const GeometryConfig& config = {});

/// Nodes carrying the given tag, ordered counter-clockwise along the
/// boundary. A corner shared by a Dirichlet and a Neumann edge is reported
/// as Dirichlet only; a node shared by Gamma1 and DirichletOther belongs to
/// Gamma1.
std::vector<Index> boundary_nodes(const Mesh& mesh, BoundaryTag tag);

struct NodeMask {
    std::vector<char> inside;
    std::string warning;

    [[nodiscard]] bool operator[](Index i) const { return inside[static_cast<std::size_t>(i)] != 0; }
    [[nodiscard]] Index count() const;
};

/// Distance from the boundary of the unit square exceeds margin.
bool in_interior(const Point& p, double margin);

/// Nodes whose distance from the boundary exceeds margin.
NodeMask interior_mask(const Mesh& mesh, double margin);

/// Writes nodes.csv, triangles.csv and boundary.csv into dir.
void export_mesh_csv(const Mesh& mesh, const std::filesystem::path& dir);

} // namespace dopinv
