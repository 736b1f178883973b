// Command-line entry point for the SDF shape GAN pipeline:
// preprocess, train, sample, interpolate, render, upscale-demo, evaluate.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sdfgan/dataset.hpp"
#include "sdfgan/errors.hpp"
#include "sdfgan/generator.hpp"
#include "sdfgan/mesh.hpp"
#include "sdfgan/mesh_to_sdf.hpp"
#include "sdfgan/metrics.hpp"
#include "sdfgan/surfacing.hpp"
#include "sdfgan/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sdfgan;

namespace {

std::string utc_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t tt = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::tm tm{};
    gmtime_r(&tt, &tm);
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// Every run records a manifest next to its outputs.
class Manifest {
public:
    Manifest(std::string command, std::uint64_t seed) : seed_(seed) {
        data_["command"] = std::move(command);
        data_["seed"] = seed;
        data_["started_utc"] = utc_now();
        data_["config"] = nullptr;
        data_["inputs"] = json::array();
        data_["outputs"] = json::array();
    }
    void set_config(const std::string& path) { data_["config"] = path; }
    void add_input(const std::string& path) { data_["inputs"].push_back(path); }
    void add_output(const std::string& path) { data_["outputs"].push_back(path); }

    // `anchor` is the primary output (directory or file).
    void write(const std::string& anchor) {
        data_["finished_utc"] = utc_now();
        std::string path = fs::is_directory(anchor) ? anchor + "/manifest.json"
                                                    : anchor + ".manifest.json";
        std::ofstream os(path);
        if (!os) throw DataError("cannot write manifest '" + path + "'");
        os << data_.dump(2) << "\n";
    }

private:
    json data_;
    std::uint64_t seed_;
};

SdfGenerator load_generator_from_checkpoint(const std::string& dir) {
    const TrainConfig cfg = TrainConfig::load(dir + "/config.cfg");
    SdfGenerator gen(cfg.generator);
    gen.set_params(ParameterStore::load(dir + "/generator.sgpc"));
    return gen;
}

// ---------------------------------------------------------------------------

int cmd_preprocess(const std::string& input_dir, const std::string& procedural, int count,
                   const std::string& out, int n_uniform, int cloud_points, int views,
                   int buffer_size, std::uint64_t seed) {
    Manifest manifest("preprocess", seed);
    std::vector<ShapeRecord> accepted;
    std::vector<std::string> reject_lines;

    if (!procedural.empty()) {
        ProceduralConfig cfg;
        cfg.kind = procedural_kind_from_string(procedural);
        cfg.count = count;
        cfg.n_uniform = n_uniform;
        cfg.cloud_points = cloud_points;
        cfg.seed = seed;
        accepted = make_procedural_dataset(cfg);
        manifest.add_input("procedural:" + procedural);
    } else {
        manifest.add_input(input_dir);
        std::vector<fs::path> files;
        if (!fs::is_directory(input_dir)) throw DataError("'" + input_dir + "' is not a directory");
        for (const auto& e : fs::directory_iterator(input_dir))
            if (e.path().extension() == ".obj") files.push_back(e.path());
        std::sort(files.begin(), files.end());
        if (files.empty()) throw DataError("no OBJ files in '" + input_dir + "'");

        const CameraRig rig = CameraRig::make(views, buffer_size);
        Rng rng(seed);
        int processed = 0;
        for (const auto& f : files) {
            const std::string id = f.stem().string();
            Rng shape_rng = rng.fork();
            try {
                const TriangleMesh mesh = read_obj(f.string());
                PreprocessResult res = preprocess_mesh(mesh, id, n_uniform, rig, shape_rng);
                if (res.filter.accepted) {
                    accepted.push_back(std::move(res.record));
                } else {
                    char line[256];
                    std::snprintf(line, sizeof(line),
                                  "%s %s interior_fraction=%.5f violation_fraction=%.5f", id.c_str(),
                                  res.filter.reason.c_str(), res.filter.interior_fraction,
                                  res.filter.violation_fraction);
                    reject_lines.push_back(line);
                }
                ++processed;
            } catch (const DataError& e) {
                reject_lines.push_back(id + " unreadable " + e.what());
            }
            std::fprintf(stderr, "[preprocess] %s: %s\n", id.c_str(),
                         !reject_lines.empty() && reject_lines.back().rfind(id, 0) == 0
                             ? reject_lines.back().c_str() + id.size() + 1
                             : "accepted");
        }
        (void)processed;
    }

    const std::string reject_log = out + ".rejects.log";
    {
        std::ofstream os(reject_log);
        for (const auto& l : reject_lines) os << l << "\n";
    }
    manifest.add_output(reject_log);

    if (accepted.empty()) {
        manifest.write(reject_log);
        throw DataError("no shapes accepted");
    }
    write_sdfd(out, accepted);
    write_sdfv(sidecar_path(out), accepted);
    manifest.add_output(out);
    manifest.add_output(sidecar_path(out));
    manifest.write(out);
    std::printf("accepted %zu shape(s), rejected %zu; dataset '%s'\n", accepted.size(),
                reject_lines.size(), out.c_str());
    return 0;
}

int cmd_train(const std::string& dataset_path, const std::string& config_path,
              const std::string& out_dir, const std::string& kind_override, std::int64_t seed_override,
              const std::string& resume) {
    TrainConfig cfg = config_path.empty() ? TrainConfig{} : TrainConfig::load(config_path);
    if (!kind_override.empty()) cfg.kind = discriminator_kind_from_string(kind_override);
    if (seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(seed_override);

    Manifest manifest("train", cfg.seed);
    if (!config_path.empty()) manifest.set_config(config_path);
    manifest.add_input(dataset_path);

    TrainingSet data(read_dataset(dataset_path), cfg.seed);
    Trainer trainer(cfg, data);
    if (!resume.empty()) {
        trainer.load_checkpoint(resume);
        manifest.add_input(resume);
    }
    const TrainSummary summary = trainer.train(out_dir);
    manifest.add_output(summary.csv_path);
    manifest.add_output(summary.final_checkpoint);
    if (!summary.best_checkpoint.empty()) manifest.add_output(summary.best_checkpoint);
    manifest.write(out_dir);
    std::printf("trained %d step(s), %d epoch(s); best |W_val| %.6f at step %d\n%s\n",
                summary.steps_run, summary.epochs_run, summary.best_val, summary.best_step,
                summary.final_checkpoint.c_str());
    return 0;
}

int cmd_sample(const std::string& checkpoint, int count, int resolution, const std::string& out_dir,
               std::uint64_t seed) {
    if (!fs::exists(checkpoint + "/generator.sgpc"))
        throw DataError("checkpoint '" + checkpoint + "' not found");
    Manifest manifest("sample", seed);
    manifest.add_input(checkpoint);
    fs::create_directories(out_dir);

    const SdfGenerator gen = load_generator_from_checkpoint(checkpoint);
    Rng rng(seed);
    int written = 0;
    for (int i = 0; i < count; ++i) {
        const LatentCode z = sample_latent(rng, gen.config().latent_dim);
        const TriangleMesh mesh = marching_cubes(make_generator_source(gen, z), resolution);
        char name[64];
        std::snprintf(name, sizeof(name), "/sample_%03d.ply", i);
        if (mesh.empty()) {
            std::fprintf(stderr, "[sample] draw %d produced no zero crossing, skipping\n", i);
            continue;
        }
        write_ply(mesh, out_dir + name);
        manifest.add_output(out_dir + name);
        ++written;
    }
    manifest.write(out_dir);
    std::printf("wrote %d/%d mesh(es) to '%s'\n", written, count, out_dir.c_str());
    return 0;
}

LatentCode fit_shape_latent(const SdfGenerator& gen, const ShapeRecord& rec, int fit_points,
                            int fit_steps, double fit_lr) {
    std::vector<Vec3> pts;
    std::vector<double> vals;
    const int n = std::min<int>(fit_points, static_cast<int>(rec.samples.samples.size()));
    pts.reserve(n);
    vals.reserve(n);
    for (int i = 0; i < n; ++i) {
        pts.push_back(rec.samples.samples[i].p);
        vals.push_back(rec.samples.samples[i].s);
    }
    FitResult fit = fit_latent(gen, pts, vals, fit_steps, fit_lr);
    if (fit.aborted_non_finite)
        throw NumericError("latent fit for shape '" + rec.samples.id + "' diverged at step " +
                           std::to_string(fit.steps_run) + " (loss " + std::to_string(fit.final_loss) +
                           ")");
    std::fprintf(stderr, "[fit] %s: loss %.6f -> %.6f in %d step(s)\n", rec.samples.id.c_str(),
                 fit.initial_loss, fit.final_loss, fit.steps_run);
    return fit.z;
}

const ShapeRecord& find_shape(const std::vector<ShapeRecord>& shapes, const std::string& id) {
    for (const auto& s : shapes)
        if (s.samples.id == id) return s;
    throw DataError("shape '" + id + "' not found in dataset");
}

int cmd_interpolate(const std::string& checkpoint, const std::string& dataset_path,
                    const std::string& shape_a, const std::string& shape_b, int frames,
                    const std::string& out_dir, int width, int height, int fit_points, int fit_steps,
                    double fit_lr) {
    Manifest manifest("interpolate", 0);
    manifest.add_input(checkpoint);
    manifest.add_input(dataset_path);
    fs::create_directories(out_dir);

    const SdfGenerator gen = load_generator_from_checkpoint(checkpoint);
    const std::vector<ShapeRecord> shapes = read_dataset(dataset_path);
    const LatentCode za = fit_shape_latent(gen, find_shape(shapes, shape_a), fit_points, fit_steps, fit_lr);
    const LatentCode zb = fit_shape_latent(gen, find_shape(shapes, shape_b), fit_points, fit_steps, fit_lr);

    TraceOptions opts;
    opts.damping = 0.8;  // learned fields need not bound true distance
    const std::vector<LatentCode> codes = interpolate_latents(za, zb, frames);
    for (std::size_t i = 0; i < codes.size(); ++i) {
        const RayImage img = sphere_trace(make_generator_source(gen, codes[i]), TraceCamera{}, width,
                                          height, opts);
        char name[64];
        std::snprintf(name, sizeof(name), "/frame_%03zu.ppm", i);
        write_ppm(img, out_dir + name);
        manifest.add_output(out_dir + name);
    }
    manifest.write(out_dir);
    std::printf("wrote %zu frame(s) to '%s'\n", codes.size(), out_dir.c_str());
    return 0;
}

int cmd_render(const std::string& checkpoint, const std::string& out, std::uint64_t seed, int width,
               int height) {
    Manifest manifest("render", seed);
    manifest.add_input(checkpoint);
    const SdfGenerator gen = load_generator_from_checkpoint(checkpoint);
    Rng rng(seed);
    const LatentCode z = sample_latent(rng, gen.config().latent_dim);
    TraceOptions opts;
    opts.damping = 0.8;
    const RayImage img = sphere_trace(make_generator_source(gen, z), TraceCamera{}, width, height, opts);
    write_ppm(img, out);
    manifest.add_output(out);
    manifest.write(out);
    std::printf("wrote '%s'\n", out.c_str());
    return 0;
}

int cmd_upscale_demo(const std::string& checkpoint, int low, int high, const std::string& out_dir,
                     std::uint64_t seed) {
    Manifest manifest("upscale-demo", seed);
    manifest.add_input(checkpoint);
    fs::create_directories(out_dir);
    const SdfGenerator gen = load_generator_from_checkpoint(checkpoint);
    Rng rng(seed);
    const LatentCode z = sample_latent(rng, gen.config().latent_dim);
    const UpscaleComparison cmp = grid_upscale_eval(make_generator_source(gen, z), low, high);

    const struct {
        const char* name;
        const VoxelGrid* grid;
    } outputs[] = {{"/low.ply", &cmp.low}, {"/upsampled.ply", &cmp.upsampled}, {"/direct.ply", &cmp.direct}};
    for (const auto& o : outputs) {
        const TriangleMesh mesh = marching_cubes_grid(*o.grid);
        write_ply(mesh, out_dir + o.name);
        manifest.add_output(out_dir + o.name);
    }
    manifest.write(out_dir);
    std::printf("wrote low/upsampled/direct meshes to '%s'\n", out_dir.c_str());
    return 0;
}

int cmd_evaluate(const std::string& checkpoint, const std::string& mesh_dir,
                 const std::string& reference_path, const std::string& out, int count, int points,
                 int resolution, int jsd_grid, const std::string& emd_mode_name, std::uint64_t seed) {
    Manifest manifest("evaluate", seed);
    manifest.add_input(reference_path);
    const EmdMode emd_mode = emd_mode_name == "approx" ? EmdMode::Approximate : EmdMode::Exact;

    Rng rng(seed);
    const std::vector<ShapeRecord> shapes = read_dataset(reference_path);
    const SplitIndices split = split_dataset(static_cast<int>(shapes.size()), seed);
    std::vector<PointCloud> reference;
    for (int idx : split.test) {
        const TriangleMesh mesh = marching_cubes_grid(shapes[idx].rasters.back());
        if (mesh.empty()) {
            std::fprintf(stderr, "[evaluate] reference '%s' has no surface, skipping\n",
                         shapes[idx].samples.id.c_str());
            continue;
        }
        reference.push_back(sample_surface(mesh, points, rng));
    }
    if (reference.empty()) throw DataError("no usable reference shapes");

    std::vector<PointCloud> generated;
    if (!checkpoint.empty()) {
        manifest.add_input(checkpoint);
        const SdfGenerator gen = load_generator_from_checkpoint(checkpoint);
        const int n = count > 0 ? count : static_cast<int>(reference.size());
        for (int i = 0; i < n; ++i) {
            const LatentCode z = sample_latent(rng, gen.config().latent_dim);
            const TriangleMesh mesh = marching_cubes(make_generator_source(gen, z), resolution);
            if (mesh.empty()) {
                std::fprintf(stderr, "[evaluate] draw %d produced no surface, skipping\n", i);
                continue;
            }
            generated.push_back(sample_surface(mesh, points, rng));
        }
    } else {
        manifest.add_input(mesh_dir);
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(mesh_dir)) {
            const auto ext = e.path().extension();
            if (ext == ".ply" || ext == ".obj") files.push_back(e.path());
        }
        std::sort(files.begin(), files.end());
        for (const auto& f : files) {
            const TriangleMesh mesh = f.extension() == ".ply" ? read_ply(f.string()) : read_obj(f.string());
            if (mesh.empty()) continue;
            generated.push_back(sample_surface(mesh, points, rng));
        }
    }
    if (generated.empty()) throw DataError("no generated shapes to evaluate");

    const MetricReport report = evaluate_clouds(generated, reference, jsd_grid, emd_mode);
    write_report_csv(report, out);
    manifest.add_output(out);
    manifest.write(out);
    std::printf("%s", format_report_table(report).c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Adversarial generation of 3D shapes as signed distance fields"};
    app.require_subcommand(1);

    // preprocess
    auto* pre = app.add_subcommand("preprocess", "Build an SDF dataset from OBJ meshes or procedurally");
    std::string pre_input, pre_procedural, pre_out;
    int pre_count = 64, pre_uniform = 0, pre_cloud = 16384, pre_views = 50, pre_buffer = 1024;
    std::uint64_t pre_seed = 1;
    pre->add_option("--input", pre_input, "Directory of OBJ meshes");
    pre->add_option("--procedural", pre_procedural, "spheres|boxes|mixed instead of OBJ input");
    pre->add_option("--count", pre_count, "Number of procedural shapes");
    pre->add_option("--out", pre_out, "Output dataset (.sdfd)")->required();
    pre->add_option("--n-uniform", pre_uniform, "Uniform samples per shape (default 262144 / 32768)");
    pre->add_option("--cloud-points", pre_cloud, "Stored surface-cloud size");
    pre->add_option("--views", pre_views, "Depth cameras");
    pre->add_option("--buffer", pre_buffer, "Depth buffer resolution");
    pre->add_option("--seed", pre_seed, "RNG seed");

    // train
    auto* tr = app.add_subcommand("train", "Adversarial training");
    std::string tr_dataset, tr_config, tr_out, tr_kind, tr_resume;
    std::int64_t tr_seed = -1;
    tr->add_option("--dataset", tr_dataset, "Input dataset (.sdfd)")->required();
    tr->add_option("--config", tr_config, "key=value training config");
    tr->add_option("--out", tr_out, "Output directory")->required();
    tr->add_option("--discriminator", tr_kind, "voxel|point|point-refined (overrides config)");
    tr->add_option("--seed", tr_seed, "Seed override");
    tr->add_option("--resume", tr_resume, "Checkpoint directory to resume from");

    // sample
    auto* sa = app.add_subcommand("sample", "Draw latents and extract meshes");
    std::string sa_checkpoint, sa_out;
    int sa_count = 4, sa_resolution = 64;
    std::uint64_t sa_seed = 1;
    sa->add_option("--checkpoint", sa_checkpoint, "Checkpoint directory")->required();
    sa->add_option("--count", sa_count, "Number of draws");
    sa->add_option("--resolution", sa_resolution, "Marching cubes resolution");
    sa->add_option("--out", sa_out, "Output directory")->required();
    sa->add_option("--seed", sa_seed, "RNG seed");

    // interpolate
    auto* in = app.add_subcommand("interpolate", "Latent interpolation between two dataset shapes");
    std::string in_checkpoint, in_dataset, in_a, in_b, in_out;
    int in_frames = 5, in_width = 256, in_height = 256, in_fit_points = 4096, in_fit_steps = 400;
    double in_fit_lr = 0.05;
    in->add_option("--checkpoint", in_checkpoint)->required();
    in->add_option("--dataset", in_dataset)->required();
    in->add_option("--shape-a", in_a)->required();
    in->add_option("--shape-b", in_b)->required();
    in->add_option("--frames", in_frames, "Number of rendered frames");
    in->add_option("--out", in_out)->required();
    in->add_option("--width", in_width);
    in->add_option("--height", in_height);
    in->add_option("--fit-points", in_fit_points, "Samples used to fit endpoint latents");
    in->add_option("--fit-steps", in_fit_steps);
    in->add_option("--fit-lr", in_fit_lr);

    // render
    auto* re = app.add_subcommand("render", "Sphere-trace one fresh latent draw");
    std::string re_checkpoint, re_out;
    std::uint64_t re_seed = 1;
    int re_width = 256, re_height = 256;
    re->add_option("--checkpoint", re_checkpoint)->required();
    re->add_option("--out", re_out, "Output PPM image")->required();
    re->add_option("--seed", re_seed);
    re->add_option("--width", re_width);
    re->add_option("--height", re_height);

    // upscale-demo
    auto* up = app.add_subcommand("upscale-demo", "Low-res raster vs trilinear upscale vs direct eval");
    std::string up_checkpoint, up_out;
    int up_low = 8, up_high = 128;
    std::uint64_t up_seed = 1;
    up->add_option("--checkpoint", up_checkpoint)->required();
    up->add_option("--low", up_low, "Training-time raster resolution");
    up->add_option("--high", up_high, "Inference raster resolution");
    up->add_option("--out", up_out)->required();
    up->add_option("--seed", up_seed);

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "Generative metrics against a reference dataset");
    std::string ev_checkpoint, ev_mesh_dir, ev_reference, ev_out, ev_emd = "exact";
    int ev_count = 0, ev_points = 2048, ev_resolution = 64, ev_jsd = 28;
    std::uint64_t ev_seed = 1;
    ev->add_option("--checkpoint", ev_checkpoint, "Checkpoint to sample from");
    ev->add_option("--mesh-dir", ev_mesh_dir, "Directory of generated meshes (alternative input)");
    ev->add_option("--reference", ev_reference, "Reference dataset (.sdfd)")->required();
    ev->add_option("--out", ev_out, "Report CSV")->required();
    ev->add_option("--count", ev_count, "Generated draws (default: reference count)");
    ev->add_option("--points", ev_points, "Surface samples per cloud");
    ev->add_option("--resolution", ev_resolution, "Marching cubes resolution for draws");
    ev->add_option("--jsd-grid", ev_jsd, "JSD histogram resolution");
    ev->add_option("--emd", ev_emd, "exact|approx assignment solver");
    ev->add_option("--seed", ev_seed);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (pre->parsed()) {
            if (pre_input.empty() == pre_procedural.empty())
                throw CLI::ValidationError("preprocess", "need exactly one of --input / --procedural");
            if (pre_uniform <= 0) pre_uniform = pre_procedural.empty() ? 262144 : 32768;
            return cmd_preprocess(pre_input, pre_procedural, pre_count, pre_out, pre_uniform,
                                  pre_cloud, pre_views, pre_buffer, pre_seed);
        }
        if (tr->parsed()) return cmd_train(tr_dataset, tr_config, tr_out, tr_kind, tr_seed, tr_resume);
        if (sa->parsed()) return cmd_sample(sa_checkpoint, sa_count, sa_resolution, sa_out, sa_seed);
        if (in->parsed())
            return cmd_interpolate(in_checkpoint, in_dataset, in_a, in_b, in_frames, in_out, in_width,
                                   in_height, in_fit_points, in_fit_steps, in_fit_lr);
        if (re->parsed()) return cmd_render(re_checkpoint, re_out, re_seed, re_width, re_height);
        if (up->parsed()) return cmd_upscale_demo(up_checkpoint, up_low, up_high, up_out, up_seed);
        if (ev->parsed())
            return cmd_evaluate(ev_checkpoint, ev_mesh_dir, ev_reference, ev_out, ev_count, ev_points,
                                ev_resolution, ev_jsd, ev_emd, ev_seed);
    } catch (const CLI::Error& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 3;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
