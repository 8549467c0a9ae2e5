#include "dopinv/mesh.hpp"

#include "dopinv/io.hpp"

#include <algorithm>
#include <cmath>

namespace dopinv {

std::string to_string(BoundaryTag tag)
{
    switch (tag) {
    case BoundaryTag::Gamma1: return "Gamma1";
    case BoundaryTag::DirichletOther: return "DirichletOther";
    case BoundaryTag::Neumann: return "Neumann";
    }
    return "?";
}

std::string to_string(Side side)
{
    switch (side) {
    case Side::Bottom: return "bottom";
    case Side::Right: return "right";
    case Side::Top: return "top";
    case Side::Left: return "left";
    }
    return "?";
}

BoundaryTag parse_boundary_tag(const std::string& s)
{
    if (s == "Gamma1") return BoundaryTag::Gamma1;
    if (s == "DirichletOther") return BoundaryTag::DirichletOther;
    if (s == "Neumann") return BoundaryTag::Neumann;
    throw InvalidArgument("unknown boundary tag '" + s + "'");
}

Side parse_side(const std::string& s)
{
    if (s == "bottom") return Side::Bottom;
    if (s == "right") return Side::Right;
    if (s == "top") return Side::Top;
    if (s == "left") return Side::Left;
    throw InvalidArgument("unknown side '" + s + "' (expected bottom|right|top|left)");
}

double Mesh::area(Index t) const
{
    const auto& tri = triangles_.at(static_cast<std::size_t>(t));
    const Point& a = node(tri[0]);
    const Point& b = node(tri[1]);
    const Point& c = node(tri[2]);
    return 0.5 * ((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y));
}

std::vector<Index> Mesh::dirichlet_nodes() const
{
    std::vector<Index> out;
    for (Index i = 0; i < node_count(); ++i) {
        if (is_dirichlet(i)) {
            out.push_back(i);
        }
    }
    return out;
}

bool Mesh::same_layout(const Mesh& other) const noexcept
{
    if (n_ != other.n_ || geometry_.gamma1_lo != other.geometry_.gamma1_lo
        || geometry_.gamma1_hi != other.geometry_.gamma1_hi) {
        return false;
    }
    if (boundary_edges_.size() != other.boundary_edges_.size()) {
        return false;
    }
    for (std::size_t e = 0; e < boundary_edges_.size(); ++e) {
        if (boundary_edges_[e].tag != other.boundary_edges_[e].tag) {
            return false;
        }
    }
    return true;
}

namespace {

struct SnappedInterval {
    Side side;
    int lo;
    int hi;
    BoundaryTag tag;
};

SnappedInterval snap(Side side, double lo, double hi, int n, BoundaryTag tag)
{
    if (!(lo >= 0.0 && hi <= 1.0 && lo < hi)) {
        throw InvalidArgument("boundary interval [" + io::format_double(lo) + ", " + io::format_double(hi)
                              + "] on " + to_string(side) + " must satisfy 0 <= lo < hi <= 1");
    }
    const int klo = static_cast<int>(std::lround(lo * n));
    const int khi = static_cast<int>(std::lround(hi * n));
    if (klo >= khi) {
        throw InvalidArgument("boundary interval on " + to_string(side) + " collapses to a point at n = "
                              + std::to_string(n));
    }
    return {side, klo, khi, tag};
}

} // namespace

MeshPtr build_unit_square(int n, const GeometryConfig& config)
{
    if (n < 2) {
        throw InvalidArgument("mesh resolution n must be >= 2");
    }

    std::vector<SnappedInterval> tagged;
    tagged.push_back(snap(Side::Top, config.gamma1_lo, config.gamma1_hi, n, BoundaryTag::Gamma1));
    for (const auto& iv : config.dirichlet_other) {
        tagged.push_back(snap(iv.side, iv.lo, iv.hi, n, BoundaryTag::DirichletOther));
    }
    for (std::size_t a = 0; a < tagged.size(); ++a) {
        for (std::size_t b = a + 1; b < tagged.size(); ++b) {
            if (tagged[a].side == tagged[b].side && tagged[a].lo < tagged[b].hi && tagged[b].lo < tagged[a].hi) {
                throw InvalidArgument("tagged boundary intervals overlap on " + to_string(tagged[a].side) + " side");
            }
        }
    }

    auto mesh = std::shared_ptr<Mesh>(new Mesh());
    Mesh& m = *mesh;
    m.n_ = n;
    m.geometry_ = config;

    const auto np = static_cast<std::size_t>((n + 1) * (n + 1));
    m.nodes_.resize(np);
    for (int j = 0; j <= n; ++j) {
        for (int i = 0; i <= n; ++i) {
            m.nodes_[static_cast<std::size_t>(m.node_index(i, j))]
                = {static_cast<double>(i) / n, static_cast<double>(j) / n};
        }
    }

    m.triangles_.reserve(static_cast<std::size_t>(2 * n * n));
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) {
            const Index v00 = m.node_index(i, j);
            const Index v10 = m.node_index(i + 1, j);
            const Index v11 = m.node_index(i + 1, j + 1);
            const Index v01 = m.node_index(i, j + 1);
            m.triangles_.push_back({v00, v10, v11});
            m.triangles_.push_back({v00, v11, v01});
        }
    }

    // Counter-clockwise loop from (0,0). Each entry records the side and the
    // integer coordinate along that side of both edge endpoints.
    struct LoopEdge {
        Index a;
        Index b;
        Side side;
        int k0;
        int k1;
    };
    std::vector<LoopEdge> loop;
    loop.reserve(static_cast<std::size_t>(4 * n));
    for (int i = 0; i < n; ++i) loop.push_back({m.node_index(i, 0), m.node_index(i + 1, 0), Side::Bottom, i, i + 1});
    for (int j = 0; j < n; ++j) loop.push_back({m.node_index(n, j), m.node_index(n, j + 1), Side::Right, j, j + 1});
    for (int i = n; i > 0; --i) loop.push_back({m.node_index(i, n), m.node_index(i - 1, n), Side::Top, i - 1, i});
    for (int j = n; j > 0; --j) loop.push_back({m.node_index(0, j), m.node_index(0, j - 1), Side::Left, j - 1, j});

    m.boundary_edges_.reserve(loop.size());
    m.loop_.reserve(loop.size());
    for (const auto& e : loop) {
        BoundaryTag tag = BoundaryTag::Neumann;
        for (const auto& iv : tagged) {
            if (iv.side == e.side && e.k0 >= iv.lo && e.k1 <= iv.hi) {
                tag = iv.tag;
                break;
            }
        }
        m.boundary_edges_.push_back({{e.a, e.b}, tag});
        m.loop_.push_back(e.a);
    }

    m.dirichlet_.assign(np, 0);
    m.boundary_.assign(np, 0);
    for (const auto& e : m.boundary_edges_) {
        for (Index v : e.nodes) {
            m.boundary_[static_cast<std::size_t>(v)] = 1;
            if (e.tag != BoundaryTag::Neumann) {
                m.dirichlet_[static_cast<std::size_t>(v)] = 1;
            }
        }
    }
    return mesh;
}

std::vector<Index> boundary_nodes(const Mesh& mesh, BoundaryTag tag)
{
    const auto& edges = mesh.boundary_edges();
    const auto& loop = mesh.boundary_loop();
    const std::size_t ne = edges.size();
    std::vector<Index> out;
    for (std::size_t k = 0; k < ne; ++k) {
        const BoundaryTag prev = edges[(k + ne - 1) % ne].tag;
        const BoundaryTag next = edges[k].tag;
        BoundaryTag owner = BoundaryTag::Neumann;
        if (prev == BoundaryTag::Gamma1 || next == BoundaryTag::Gamma1) {
            owner = BoundaryTag::Gamma1;
        } else if (prev == BoundaryTag::DirichletOther || next == BoundaryTag::DirichletOther) {
            owner = BoundaryTag::DirichletOther;
        }
        if (owner == tag) {
            out.push_back(loop[k]);
        }
    }
    return out;
}

Index NodeMask::count() const
{
    return static_cast<Index>(std::count(inside.begin(), inside.end(), char{1}));
}

bool in_interior(const Point& p, double margin)
{
    // Points exactly on the strip edge count as outside.
    constexpr double tol = 1e-12;
    return std::min({p.x, 1.0 - p.x, p.y, 1.0 - p.y}) > margin + tol;
}

NodeMask interior_mask(const Mesh& mesh, double margin)
{
    if (!(margin > 0.0 && margin < 0.5)) {
        throw InvalidArgument("interior margin must lie in (0, 1/2)");
    }
    NodeMask mask;
    mask.inside.assign(static_cast<std::size_t>(mesh.node_count()), 0);
    for (Index i = 0; i < mesh.node_count(); ++i) {
        if (in_interior(mesh.node(i), margin)) {
            mask.inside[static_cast<std::size_t>(i)] = 1;
        }
    }
    if (mask.count() == 0) {
        mask.warning = "interior mask with margin " + io::format_double(margin) + " is empty at n = "
                       + std::to_string(mesh.resolution());
    }
    return mask;
}

void export_mesh_csv(const Mesh& mesh, const std::filesystem::path& dir)
{
    io::ensure_directory(dir);
    {
        const std::array<std::string_view, 3> h{"id", "x", "y"};
        io::CsvWriter w(dir / "nodes.csv", h);
        for (Index i = 0; i < mesh.node_count(); ++i) {
            w << static_cast<long long>(i) << mesh.node(i).x << mesh.node(i).y;
            w.end_row();
        }
    }
    {
        const std::array<std::string_view, 3> h{"n0", "n1", "n2"};
        io::CsvWriter w(dir / "triangles.csv", h);
        for (const auto& t : mesh.triangles()) {
            w << t[0] << t[1] << t[2];
            w.end_row();
        }
    }
    {
        const std::array<std::string_view, 3> h{"n0", "n1", "tag"};
        io::CsvWriter w(dir / "boundary.csv", h);
        for (const auto& e : mesh.boundary_edges()) {
            w << e.nodes[0] << e.nodes[1] << to_string(e.tag);
            w.end_row();
        }
    }
}

} // namespace dopinv
