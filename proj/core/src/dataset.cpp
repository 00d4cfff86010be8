#include "msplat/dataset.hpp"

#include "msplat/io_image.hpp"
#include "msplat/io_ply.hpp"
#include "msplat/trainer.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>

namespace msplat {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<int> SceneDataset::train_indices() const {
    std::vector<int> out;
    for (int i = 0; i < int(frames.size()); ++i)
        if (frames[i].split != "test")
            out.push_back(i);
    return out;
}

std::vector<int> SceneDataset::test_indices() const {
    std::vector<int> out;
    for (int i = 0; i < int(frames.size()); ++i)
        if (frames[i].split == "test")
            out.push_back(i);
    return out;
}

namespace {

Mat3 quat_wxyz_to_rotation(const Vec4& q) {
    const Vec4 u = q / q.norm();
    const Scalar w = u[0], x = u[1], y = u[2], z = u[3];
    Mat3 R;
    R << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
         2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
         2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return R;
}

std::string resolve(const fs::path& root, const std::string& rel) {
    return (root / rel).string();
}

} // namespace

SceneDataset load_dataset(const std::string& root) {
    const fs::path base(root);
    const fs::path manifest = base / "cameras.json";
    std::ifstream in(manifest);
    if (!in)
        throw std::runtime_error("load_dataset: cannot open " + manifest.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw std::runtime_error("load_dataset: " + manifest.string() + ": " + e.what());
    }

    SceneDataset ds;
    ds.width = doc.at("width").get<int>();
    ds.height = doc.at("height").get<int>();
    ds.num_classes = doc.value("num_classes", 0);
    const Scalar fx = doc.at("fx").get<Scalar>();
    const Scalar fy = doc.at("fy").get<Scalar>();
    const Scalar cx = doc.at("cx").get<Scalar>();
    const Scalar cy = doc.at("cy").get<Scalar>();

    if (doc.contains("points"))
        load_points_ply(resolve(base, doc["points"].get<std::string>()), ds.points,
                        ds.point_colors);

    for (const auto& f : doc.at("frames")) {
        FrameRecord rec;
        const auto q = f.at("q_cam_to_world");
        const auto t = f.at("t_cam_to_world");
        if (q.size() != 4 || t.size() != 3)
            throw std::runtime_error("load_dataset: bad pose arrays in " + manifest.string());
        const Vec4 quat(q[0].get<Scalar>(), q[1].get<Scalar>(), q[2].get<Scalar>(),
                        q[3].get<Scalar>());
        const Vec3 trans(t[0].get<Scalar>(), t[1].get<Scalar>(), t[2].get<Scalar>());
        rec.view = make_camera(fx, fy, cx, cy, ds.width, ds.height,
                               quat_wxyz_to_rotation(quat), trans);
        rec.split = f.value("split", "train");

        auto check_shape = [&](int w, int h, const std::string& path) {
            if (w != ds.width || h != ds.height)
                throw std::runtime_error("load_dataset: " + path + ": size " +
                                         std::to_string(w) + "x" + std::to_string(h) +
                                         " does not match dataset " + std::to_string(ds.width) +
                                         "x" + std::to_string(ds.height));
        };

        if (f.contains("rgb")) {
            rec.rgb_path = resolve(base, f["rgb"].get<std::string>());
            GridU8 img = read_png(rec.rgb_path);
            if (img.channels() != 3)
                throw std::runtime_error("load_dataset: " + rec.rgb_path + ": expected 3 channels");
            check_shape(img.width(), img.height(), rec.rgb_path);
            rec.rgb = to_unit(img);
        }
        if (f.contains("depth")) {
            rec.depth_path = resolve(base, f["depth"].get<std::string>());
            rec.depth = read_pfm(rec.depth_path);
            if (rec.depth.channels() != 1)
                throw std::runtime_error("load_dataset: " + rec.depth_path +
                                         ": expected 1 channel");
            check_shape(rec.depth.width(), rec.depth.height(), rec.depth_path);
            for (const Scalar v : rec.depth.storage())
                if (!(v >= 0))
                    throw std::runtime_error("load_dataset: " + rec.depth_path +
                                             ": negative or non-finite depth value");
        }
        if (f.contains("normal")) {
            rec.normal_path = resolve(base, f["normal"].get<std::string>());
            rec.normal = read_pfm(rec.normal_path);
            if (rec.normal.channels() != 3)
                throw std::runtime_error("load_dataset: " + rec.normal_path +
                                         ": expected 3 channels");
            check_shape(rec.normal.width(), rec.normal.height(), rec.normal_path);
        }
        if (f.contains("sem")) {
            rec.sem_path = resolve(base, f["sem"].get<std::string>());
            rec.labels = read_png(rec.sem_path);
            if (rec.labels.channels() != 1)
                throw std::runtime_error("load_dataset: " + rec.sem_path +
                                         ": expected a single-channel label map");
            check_shape(rec.labels.width(), rec.labels.height(), rec.sem_path);
            for (const auto v : rec.labels.storage())
                if (int(v) >= ds.num_classes)
                    throw std::runtime_error("load_dataset: " + rec.sem_path + ": label " +
                                             std::to_string(int(v)) + " >= num_classes");
        }
        ds.frames.push_back(std::move(rec));
    }
    if (ds.frames.empty())
        throw std::runtime_error("load_dataset: no frames in " + manifest.string());
    return ds;
}

void save_dataset(const std::string& root, const SceneDataset& dataset) {
    const fs::path base(root);
    fs::create_directories(base / "frames");

    json doc;
    doc["width"] = dataset.width;
    doc["height"] = dataset.height;
    doc["num_classes"] = dataset.num_classes;
    if (!dataset.frames.empty()) {
        const auto& v = dataset.frames.front().view;
        doc["fx"] = v.fx;
        doc["fy"] = v.fy;
        doc["cx"] = v.cx;
        doc["cy"] = v.cy;
    }
    if (!dataset.points.empty()) {
        doc["points"] = "points.ply";
        save_points_ply((base / "points.ply").string(), dataset.points, dataset.point_colors);
    }

    json frames = json::array();
    char name[64];
    for (size_t i = 0; i < dataset.frames.size(); ++i) {
        const auto& rec = dataset.frames[i];
        json f;
        // Pose back to quaternion (w,x,y,z).
        const Mat3& R = rec.view.R_cam_to_world;
        Eigen::Quaternion<Scalar> q(R);
        f["q_cam_to_world"] = {q.w(), q.x(), q.y(), q.z()};
        f["t_cam_to_world"] = {rec.view.t_cam_to_world.x(), rec.view.t_cam_to_world.y(),
                               rec.view.t_cam_to_world.z()};
        f["split"] = rec.split;

        if (!rec.rgb.empty()) {
            std::snprintf(name, sizeof(name), "frames/%03zu_rgb.png", i);
            write_png((base / name).string(), to_u8(rec.rgb));
            f["rgb"] = name;
        }
        if (!rec.depth.empty()) {
            std::snprintf(name, sizeof(name), "frames/%03zu_depth.pfm", i);
            write_pfm((base / name).string(), rec.depth);
            f["depth"] = name;
        }
        if (!rec.normal.empty()) {
            std::snprintf(name, sizeof(name), "frames/%03zu_normal.pfm", i);
            write_pfm((base / name).string(), rec.normal);
            f["normal"] = name;
        }
        if (!rec.labels.empty()) {
            std::snprintf(name, sizeof(name), "frames/%03zu_sem.png", i);
            write_png((base / name).string(), rec.labels);
            f["sem"] = name;
        }
        frames.push_back(std::move(f));
    }
    doc["frames"] = std::move(frames);

    std::ofstream out(base / "cameras.json");
    if (!out)
        throw std::runtime_error("save_dataset: cannot write manifest under " + root);
    out << doc.dump(2) << "\n";
}

TrainConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("load_config: cannot open " + path);
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw std::runtime_error("load_config: " + path + ": " + e.what());
    }

    static const std::set<std::string> known = {
        "iterations",    "lr_position",   "lr_rotation",
        "lr_scale",      "lr_opacity",    "lr_sh",
        "lr_semantics",  "lr_k",          "lambdas",
        "prune_interval", "prune_threshold", "prune_enabled",
        "prune_keep_small", "k_reset",    "step1",
        "step2",         "lambda_fuse",   "mask_threshold",
        "sigma_scale",   "early_stop_transmittance", "background",
        "sh_degree",     "seed",          "threads",
        "deterministic"};
    for (const auto& item : doc.items())
        if (!known.count(item.key()))
            throw std::runtime_error("load_config: " + path + ": unknown key '" + item.key() +
                                     "'");

    TrainConfig cfg;
    auto get = [&](const char* key, auto& field) {
        if (doc.contains(key))
            field = doc[key].get<std::decay_t<decltype(field)>>();
    };
    get("iterations", cfg.iterations);
    get("lr_position", cfg.lr_position);
    get("lr_rotation", cfg.lr_rotation);
    get("lr_scale", cfg.lr_scale);
    get("lr_opacity", cfg.lr_opacity);
    get("lr_sh", cfg.lr_sh);
    get("lr_semantics", cfg.lr_semantics);
    get("lr_k", cfg.lr_k);
    if (doc.contains("lambdas")) {
        const auto& arr = doc["lambdas"];
        if (!arr.is_array() || arr.size() != 6)
            throw std::runtime_error("load_config: " + path +
                                     ": 'lambdas' must be an array of 6 weights");
        for (int i = 0; i < 6; ++i)
            cfg.lambdas[i] = arr[i].get<Scalar>();
    }
    get("prune_interval", cfg.prune_interval);
    get("prune_threshold", cfg.prune_threshold);
    get("prune_enabled", cfg.prune_enabled);
    get("prune_keep_small", cfg.prune_keep_small);
    get("k_reset", cfg.k_reset);
    get("step1", cfg.step1);
    get("step2", cfg.step2);
    get("lambda_fuse", cfg.lambda_fuse);
    get("mask_threshold", cfg.mask_threshold);
    get("sigma_scale", cfg.sigma_scale);
    get("early_stop_transmittance", cfg.early_stop_transmittance);
    if (doc.contains("background")) {
        const auto& arr = doc["background"];
        if (!arr.is_array() || arr.size() != 3)
            throw std::runtime_error("load_config: " + path +
                                     ": 'background' must be an array of 3 values");
        for (int i = 0; i < 3; ++i)
            cfg.background[i] = arr[i].get<Scalar>();
    }
    get("sh_degree", cfg.sh_degree);
    get("seed", cfg.seed);
    get("threads", cfg.threads);
    get("deterministic", cfg.deterministic);
    cfg.validate();
    return cfg;
}

} // namespace msplat
