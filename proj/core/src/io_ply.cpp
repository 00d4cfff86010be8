#include "msplat/io_ply.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace msplat {

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
    throw std::runtime_error(path + ": " + msg);
}

struct PlyProperty {
    std::string name;
    std::string type;
    size_t size = 0;
};

struct PlyHeader {
    size_t vertex_count = 0;
    std::vector<PlyProperty> properties;
    size_t row_size = 0;
};

size_t type_size(const std::string& t) {
    if (t == "float" || t == "float32" || t == "int" || t == "int32" || t == "uint" ||
        t == "uint32")
        return 4;
    if (t == "double" || t == "float64")
        return 8;
    if (t == "char" || t == "int8" || t == "uchar" || t == "uint8")
        return 1;
    if (t == "short" || t == "int16" || t == "ushort" || t == "uint16")
        return 2;
    return 0;
}

PlyHeader read_header(std::istream& in, const std::string& path) {
    std::string line;
    if (!std::getline(in, line) || line != "ply")
        fail(path, "not a PLY file (missing 'ply' magic)");
    if (!std::getline(in, line) || line != "format binary_little_endian 1.0")
        fail(path, "unsupported PLY format (need binary_little_endian 1.0)");

    PlyHeader header;
    bool in_vertex = false;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string word;
        ls >> word;
        if (word == "end_header")
            break;
        if (word == "comment")
            continue;
        if (word == "element") {
            std::string name;
            size_t count;
            ls >> name >> count;
            in_vertex = (name == "vertex");
            if (in_vertex)
                header.vertex_count = count;
            else if (count > 0)
                fail(path, "unsupported non-vertex element '" + name + "'");
        } else if (word == "property") {
            if (!in_vertex)
                continue;
            std::string type, name;
            ls >> type >> name;
            if (type == "list")
                fail(path, "list properties are not supported");
            const size_t size = type_size(type);
            if (size == 0)
                fail(path, "unknown property type '" + type + "'");
            header.properties.push_back({name, type, size});
            header.row_size += size;
        }
    }
    if (header.properties.empty())
        fail(path, "no vertex properties found");
    return header;
}

Scalar decode(const char* src, const PlyProperty& p) {
    if (p.size == 8) {
        double v;
        std::memcpy(&v, src, 8);
        return v;
    }
    if (p.type == "float" || p.type == "float32") {
        float v;
        std::memcpy(&v, src, 4);
        return v;
    }
    if (p.type == "uchar" || p.type == "uint8")
        return Scalar(*reinterpret_cast<const std::uint8_t*>(src));
    if (p.type == "char" || p.type == "int8")
        return Scalar(*reinterpret_cast<const std::int8_t*>(src));
    if (p.size == 2) {
        std::uint16_t v;
        std::memcpy(&v, src, 2);
        return Scalar(v);
    }
    std::int32_t v;
    std::memcpy(&v, src, 4);
    return Scalar(v);
}

void write_header_line(std::ostream& os, const std::string& name) {
    os << "property double " << name << "\n";
}

} // namespace

void save_scene_ply(const std::string& path, const Scene& scene) {
    scene.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out)
        fail(path, "cannot open for writing");

    const int ch = scene.sh_coeff_count();
    const int rest = 3 * (ch - 1);
    out << "ply\nformat binary_little_endian 1.0\n";
    out << "element vertex " << scene.size() << "\n";
    for (const char* n : {"x", "y", "z"})
        write_header_line(out, n);
    for (int i = 0; i < 3; ++i)
        write_header_line(out, "f_dc_" + std::to_string(i));
    for (int i = 0; i < rest; ++i)
        write_header_line(out, "f_rest_" + std::to_string(i));
    write_header_line(out, "opacity");
    for (int i = 0; i < 3; ++i)
        write_header_line(out, "scale_" + std::to_string(i));
    for (int i = 0; i < 4; ++i)
        write_header_line(out, "rot_" + std::to_string(i));
    for (int i = 0; i < scene.num_classes; ++i)
        write_header_line(out, "sem_" + std::to_string(i));
    write_header_line(out, "grad_k");
    out << "end_header\n";

    std::vector<double> row;
    for (const auto& g : scene.gaussians) {
        row.clear();
        for (int i = 0; i < 3; ++i)
            row.push_back(g.position[i]);
        for (int c = 0; c < 3; ++c)
            row.push_back(g.sh(c, 0));
        for (int c = 0; c < 3; ++c)
            for (int j = 1; j < ch; ++j)
                row.push_back(g.sh(c, j));
        row.push_back(g.opacity_logit);
        for (int i = 0; i < 3; ++i)
            row.push_back(g.log_scale[i]);
        for (int i = 0; i < 4; ++i)
            row.push_back(g.rotation[i]);
        for (int i = 0; i < scene.num_classes; ++i)
            row.push_back(g.semantic_logits[i]);
        row.push_back(g.gradient_factor);
        out.write(reinterpret_cast<const char*>(row.data()),
                  std::streamsize(row.size() * sizeof(double)));
    }
    if (!out)
        fail(path, "write failed");
}

Scene load_scene_ply(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        fail(path, "cannot open");
    const PlyHeader header = read_header(in, path);

    std::map<std::string, int> index; // property name -> column
    for (size_t i = 0; i < header.properties.size(); ++i)
        index[header.properties[i].name] = int(i);

    auto require = [&](const std::string& name) {
        auto it = index.find(name);
        if (it == index.end())
            fail(path, "missing required property '" + name + "'");
        return it->second;
    };

    const int ix = require("x"), iy = require("y"), iz = require("z");
    const int idc[3] = {require("f_dc_0"), require("f_dc_1"), require("f_dc_2")};
    const int iop = require("opacity");
    const int isc[3] = {require("scale_0"), require("scale_1"), require("scale_2")};
    const int irot[4] = {require("rot_0"), require("rot_1"), require("rot_2"), require("rot_3")};

    int rest_count = 0;
    while (index.count("f_rest_" + std::to_string(rest_count)))
        ++rest_count;
    if (rest_count % 3 != 0)
        fail(path, "f_rest_* count " + std::to_string(rest_count) + " is not a multiple of 3");
    const int coeffs = 1 + rest_count / 3;
    const int degree = int(std::lround(std::sqrt(double(coeffs)))) - 1;
    if ((degree + 1) * (degree + 1) != coeffs || degree > 3)
        fail(path, "f_rest_* count " + std::to_string(rest_count) +
                       " does not match an SH degree in [0,3]");

    int num_classes = 0;
    while (index.count("sem_" + std::to_string(num_classes)))
        ++num_classes;
    const bool has_k = index.count("grad_k") > 0;

    // Anything else is tolerated but ignored.
    size_t known = 14 + size_t(rest_count) + size_t(num_classes) + (has_k ? 1 : 0);
    if (header.properties.size() > known) {
        for (const auto& p : header.properties) {
            const std::string& n = p.name;
            const bool recognized =
                n == "x" || n == "y" || n == "z" || n == "opacity" || n == "grad_k" ||
                n.rfind("f_dc_", 0) == 0 || n.rfind("f_rest_", 0) == 0 ||
                n.rfind("scale_", 0) == 0 || n.rfind("rot_", 0) == 0 || n.rfind("sem_", 0) == 0;
            if (!recognized)
                std::cerr << "msplat: " << path << ": ignoring unknown property '" << n << "'\n";
        }
    }

    std::vector<size_t> offsets(header.properties.size());
    size_t off = 0;
    for (size_t i = 0; i < header.properties.size(); ++i) {
        offsets[i] = off;
        off += header.properties[i].size;
    }

    Scene scene;
    scene.num_classes = num_classes;
    scene.sh_degree = degree;
    scene.gaussians.resize(header.vertex_count);

    std::vector<char> row(header.row_size);
    auto get = [&](int col) { return decode(row.data() + offsets[col], header.properties[col]); };

    for (size_t v = 0; v < header.vertex_count; ++v) {
        in.read(row.data(), std::streamsize(row.size()));
        if (!in)
            fail(path, "truncated payload at vertex " + std::to_string(v));
        auto& g = scene.gaussians[v];
        g.position = Vec3(get(ix), get(iy), get(iz));
        g.sh = ShMatrix::Zero(3, coeffs);
        for (int c = 0; c < 3; ++c)
            g.sh(c, 0) = get(idc[c]);
        for (int c = 0; c < 3; ++c)
            for (int j = 1; j < coeffs; ++j)
                g.sh(c, j) = get(index["f_rest_" + std::to_string(c * (coeffs - 1) + j - 1)]);
        g.opacity_logit = get(iop);
        g.log_scale = Vec3(get(isc[0]), get(isc[1]), get(isc[2]));
        g.rotation = Vec4(get(irot[0]), get(irot[1]), get(irot[2]), get(irot[3]));
        g.semantic_logits = VecX::Zero(num_classes);
        for (int i = 0; i < num_classes; ++i)
            g.semantic_logits[i] = get(index["sem_" + std::to_string(i)]);
        g.gradient_factor = has_k ? get(index["grad_k"]) : 0.9;
    }
    scene.validate();
    return scene;
}

void save_points_ply(const std::string& path, const std::vector<Vec3>& points,
                     const std::vector<Vec3>& colors) {
    if (points.size() != colors.size())
        throw std::invalid_argument("save_points_ply: point/color count mismatch");
    std::ofstream out(path, std::ios::binary);
    if (!out)
        fail(path, "cannot open for writing");
    out << "ply\nformat binary_little_endian 1.0\n"
        << "element vertex " << points.size() << "\n"
        << "property double x\nproperty double y\nproperty double z\n"
        << "property uchar red\nproperty uchar green\nproperty uchar blue\n"
        << "end_header\n";
    for (size_t i = 0; i < points.size(); ++i) {
        double xyz[3] = {points[i].x(), points[i].y(), points[i].z()};
        out.write(reinterpret_cast<const char*>(xyz), 24);
        for (int c = 0; c < 3; ++c) {
            const double v = std::clamp(colors[i][c], Scalar(0), Scalar(1));
            const std::uint8_t b = std::uint8_t(std::lround(v * 255.0));
            out.write(reinterpret_cast<const char*>(&b), 1);
        }
    }
    if (!out)
        fail(path, "write failed");
}

void load_points_ply(const std::string& path, std::vector<Vec3>& points,
                     std::vector<Vec3>& colors) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        fail(path, "cannot open");
    const PlyHeader header = read_header(in, path);
    std::map<std::string, int> index;
    for (size_t i = 0; i < header.properties.size(); ++i)
        index[header.properties[i].name] = int(i);
    for (const char* n : {"x", "y", "z", "red", "green", "blue"})
        if (!index.count(n))
            fail(path, std::string("missing required property '") + n + "'");
    std::vector<size_t> offsets(header.properties.size());
    size_t off = 0;
    for (size_t i = 0; i < header.properties.size(); ++i) {
        offsets[i] = off;
        off += header.properties[i].size;
    }
    points.assign(header.vertex_count, Vec3::Zero());
    colors.assign(header.vertex_count, Vec3::Zero());
    std::vector<char> row(header.row_size);
    auto get = [&](const std::string& n) {
        return decode(row.data() + offsets[index[n]], header.properties[index[n]]);
    };
    for (size_t v = 0; v < header.vertex_count; ++v) {
        in.read(row.data(), std::streamsize(row.size()));
        if (!in)
            fail(path, "truncated payload at vertex " + std::to_string(v));
        points[v] = Vec3(get("x"), get("y"), get("z"));
        colors[v] = Vec3(get("red"), get("green"), get("blue")) / 255.0;
    }
}

} // namespace msplat
