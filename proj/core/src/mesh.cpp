#include "sdfgan/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "sdfgan/errors.hpp"

namespace sdfgan {

Vec3 TriangleMesh::bbox_min() const {
    Vec3 m{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
           std::numeric_limits<double>::infinity()};
    for (const Vec3& v : vertices)
        for (int i = 0; i < 3; ++i) m[i] = std::min(m[i], v[i]);
    return m;
}

Vec3 TriangleMesh::bbox_max() const {
    Vec3 m{-std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(),
           -std::numeric_limits<double>::infinity()};
    for (const Vec3& v : vertices)
        for (int i = 0; i < 3; ++i) m[i] = std::max(m[i], v[i]);
    return m;
}

double TriangleMesh::signed_volume() const {
    double vol = 0.0;
    for (const auto& t : triangles) {
        const Vec3& a = vertices[t[0]];
        const Vec3& b = vertices[t[1]];
        const Vec3& c = vertices[t[2]];
        vol += dot(a, cross(b, c));
    }
    return vol / 6.0;
}

double TriangleMesh::surface_area() const {
    double area = 0.0;
    for (const auto& t : triangles)
        area += 0.5 * norm(cross(vertices[t[1]] - vertices[t[0]], vertices[t[2]] - vertices[t[0]]));
    return area;
}

void TriangleMesh::cleanup(double min_area) {
    std::vector<std::array<int, 3>> kept;
    kept.reserve(triangles.size());
    const int n = static_cast<int>(vertices.size());
    for (const auto& t : triangles) {
        if (t[0] < 0 || t[1] < 0 || t[2] < 0 || t[0] >= n || t[1] >= n || t[2] >= n)
            throw DataError("mesh: triangle index out of range");
        if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2]) continue;
        const double area =
            0.5 * norm(cross(vertices[t[1]] - vertices[t[0]], vertices[t[2]] - vertices[t[0]]));
        if (area > min_area) kept.push_back(t);
    }
    triangles = std::move(kept);
}

TriangleMesh read_obj(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open OBJ '" + path + "'");
    TriangleMesh mesh;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag == "v") {
            Vec3 v;
            if (!(ls >> v[0] >> v[1] >> v[2])) throw DataError("malformed vertex in '" + path + "'");
            mesh.vertices.push_back(v);
        } else if (tag == "f") {
            std::vector<int> idx;
            std::string tok;
            while (ls >> tok) {
                // "i", "i/t", "i//n", "i/t/n"; negative indices are relative.
                const std::size_t slash = tok.find('/');
                int vi = std::stoi(slash == std::string::npos ? tok : tok.substr(0, slash));
                if (vi < 0) vi = static_cast<int>(mesh.vertices.size()) + vi + 1;
                if (vi < 1 || vi > static_cast<int>(mesh.vertices.size()))
                    throw DataError("face index out of range in '" + path + "'");
                idx.push_back(vi - 1);
            }
            if (idx.size() < 3) throw DataError("face with fewer than 3 vertices in '" + path + "'");
            for (std::size_t i = 1; i + 1 < idx.size(); ++i)
                mesh.triangles.push_back({idx[0], idx[i], idx[i + 1]});
        }
    }
    mesh.cleanup();
    return mesh;
}

void write_obj(const TriangleMesh& mesh, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot open '" + path + "' for writing");
    os.precision(17);
    for (const Vec3& v : mesh.vertices) os << "v " << v[0] << " " << v[1] << " " << v[2] << "\n";
    for (const auto& t : mesh.triangles)
        os << "f " << t[0] + 1 << " " << t[1] + 1 << " " << t[2] + 1 << "\n";
    if (!os) throw DataError("write failed for '" + path + "'");
}

void write_ply(const TriangleMesh& mesh, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot open '" + path + "' for writing");
    os.precision(17);
    os << "ply\nformat ascii 1.0\n";
    os << "element vertex " << mesh.vertices.size() << "\n";
    os << "property double x\nproperty double y\nproperty double z\n";
    os << "element face " << mesh.triangles.size() << "\n";
    os << "property list uchar int vertex_indices\nend_header\n";
    for (const Vec3& v : mesh.vertices) os << v[0] << " " << v[1] << " " << v[2] << "\n";
    for (const auto& t : mesh.triangles) os << "3 " << t[0] << " " << t[1] << " " << t[2] << "\n";
    if (!os) throw DataError("write failed for '" + path + "'");
}

TriangleMesh read_ply(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open PLY '" + path + "'");
    std::string line;
    std::getline(is, line);
    if (line != "ply") throw DataError("'" + path + "' is not a PLY file");
    std::size_t n_vertices = 0, n_faces = 0;
    while (std::getline(is, line)) {
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag == "format") {
            std::string fmt;
            ls >> fmt;
            if (fmt != "ascii") throw DataError("only ASCII PLY is supported: '" + path + "'");
        } else if (tag == "element") {
            std::string what;
            std::size_t count;
            ls >> what >> count;
            if (what == "vertex") n_vertices = count;
            if (what == "face") n_faces = count;
        } else if (tag == "end_header") {
            break;
        }
    }
    TriangleMesh mesh;
    mesh.vertices.resize(n_vertices);
    for (auto& v : mesh.vertices)
        if (!(is >> v[0] >> v[1] >> v[2])) throw DataError("truncated PLY '" + path + "'");
    mesh.triangles.resize(n_faces);
    for (auto& t : mesh.triangles) {
        int k;
        if (!(is >> k) || k != 3) throw DataError("non-triangle face in PLY '" + path + "'");
        is >> t[0] >> t[1] >> t[2];
    }
    mesh.cleanup();
    return mesh;
}

double normalize_scale(const TriangleMesh& mesh) {
    if (mesh.vertices.empty()) throw DataError("normalize: empty mesh");
    const Vec3 lo = mesh.bbox_min(), hi = mesh.bbox_max();
    const Vec3 center = (lo + hi) * 0.5;
    double max_r = 0.0;
    for (const Vec3& v : mesh.vertices) max_r = std::max(max_r, norm(v - center));
    if (max_r <= 0.0) throw DataError("normalize: degenerate mesh (zero extent)");
    return 0.9 / max_r;
}

TriangleMesh normalize_mesh(const TriangleMesh& mesh) {
    if (mesh.vertices.empty() || mesh.triangles.empty()) throw DataError("normalize: empty mesh");
    const Vec3 lo = mesh.bbox_min(), hi = mesh.bbox_max();
    const Vec3 center = (lo + hi) * 0.5;
    const double s = normalize_scale(mesh);
    TriangleMesh out = mesh;
    for (Vec3& v : out.vertices) v = (v - center) * s;
    return out;
}

namespace {

// Icosahedron vertices on the unit sphere.
void icosahedron(std::vector<Vec3>& verts, std::vector<std::array<int, 3>>& tris) {
    const double t = (1.0 + std::sqrt(5.0)) / 2.0;
    const double s = 1.0 / std::sqrt(1.0 + t * t);
    auto v = [&](double a, double b, double c) { verts.push_back(Vec3{a, b, c} * s); };
    v(-1, t, 0); v(1, t, 0); v(-1, -t, 0); v(1, -t, 0);
    v(0, -1, t); v(0, 1, t); v(0, -1, -t); v(0, 1, -t);
    v(t, 0, -1); v(t, 0, 1); v(-t, 0, -1); v(-t, 0, 1);
    tris = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
            {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
            {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
            {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
}

int midpoint(std::map<std::pair<int, int>, int>& cache, std::vector<Vec3>& verts, int a, int b) {
    auto key = std::minmax(a, b);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    Vec3 m = normalized((verts[a] + verts[b]) * 0.5);
    verts.push_back(m);
    const int id = static_cast<int>(verts.size()) - 1;
    cache.emplace(key, id);
    return id;
}

}  // namespace

TriangleMesh make_icosphere(double radius, int subdivisions, Vec3 center) {
    std::vector<Vec3> verts;
    std::vector<std::array<int, 3>> tris;
    icosahedron(verts, tris);
    std::map<std::pair<int, int>, int> cache;
    for (int s = 0; s < subdivisions; ++s) {
        std::vector<std::array<int, 3>> next;
        next.reserve(tris.size() * 4);
        for (const auto& t : tris) {
            const int ab = midpoint(cache, verts, t[0], t[1]);
            const int bc = midpoint(cache, verts, t[1], t[2]);
            const int ca = midpoint(cache, verts, t[2], t[0]);
            next.push_back({t[0], ab, ca});
            next.push_back({t[1], bc, ab});
            next.push_back({t[2], ca, bc});
            next.push_back({ab, bc, ca});
        }
        tris = std::move(next);
    }
    TriangleMesh mesh;
    mesh.vertices.reserve(verts.size());
    for (const Vec3& v : verts) mesh.vertices.push_back(center + v * radius);
    mesh.triangles = std::move(tris);
    return mesh;
}

TriangleMesh make_box(Vec3 center, Vec3 half) {
    TriangleMesh m;
    for (int i = 0; i < 8; ++i)
        m.vertices.push_back({center[0] + (i & 1 ? half[0] : -half[0]),
                              center[1] + (i & 2 ? half[1] : -half[1]),
                              center[2] + (i & 4 ? half[2] : -half[2])});
    // Faces with outward orientation.
    const int quads[6][4] = {
        {0, 2, 3, 1},  // -z
        {4, 5, 7, 6},  // +z
        {0, 1, 5, 4},  // -y
        {2, 6, 7, 3},  // +y
        {0, 4, 6, 2},  // -x
        {1, 3, 7, 5},  // +x
    };
    for (const auto& q : quads) {
        m.triangles.push_back({q[0], q[1], q[2]});
        m.triangles.push_back({q[0], q[2], q[3]});
    }
    return m;
}

TriangleMesh make_open_hemisphere(double radius, int subdivisions) {
    TriangleMesh sphere = make_icosphere(radius, subdivisions);
    TriangleMesh out;
    std::vector<int> remap(sphere.vertices.size(), -1);
    auto keep = [&](int idx) {
        if (remap[idx] < 0) {
            remap[idx] = static_cast<int>(out.vertices.size());
            out.vertices.push_back(sphere.vertices[idx]);
        }
        return remap[idx];
    };
    for (const auto& t : sphere.triangles) {
        // Keep triangles whose centroid is in the upper half space.
        const Vec3 c = (sphere.vertices[t[0]] + sphere.vertices[t[1]] + sphere.vertices[t[2]]) * (1.0 / 3.0);
        if (c[2] <= 0.0) continue;
        out.triangles.push_back({keep(t[0]), keep(t[1]), keep(t[2])});
    }
    return out;
}

TriangleMesh make_slab(double thickness) {
    return make_box({0.0, 0.0, 0.0}, {1.0, 1.0, thickness * 0.5});
}

TriangleMesh make_hollow_box(Vec3 half_outer, Vec3 half_inner) {
    TriangleMesh outer = make_box({0.0, 0.0, 0.0}, half_outer);
    TriangleMesh inner = make_box({0.0, 0.0, 0.0}, half_inner);
    // Flip the inner shell so its normals face the cavity.
    const int base = static_cast<int>(outer.vertices.size());
    outer.vertices.insert(outer.vertices.end(), inner.vertices.begin(), inner.vertices.end());
    for (const auto& t : inner.triangles)
        outer.triangles.push_back({base + t[0], base + t[2], base + t[1]});
    return outer;
}

}  // namespace sdfgan
