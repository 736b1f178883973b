// End-to-end checks of the command-line tool: drives the real binary through
// preprocess / train / sample / upscale-demo / evaluate / interpolate /
// render on tiny procedural data.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "sdfgan/dataset.hpp"
#include "sdfgan/mesh.hpp"

using namespace sdfgan;
namespace fs = std::filesystem;

namespace {

const std::string kCli = SDFGAN_CLI_PATH;

struct Workspace {
    fs::path dir;
    Workspace() {
        dir = fs::temp_directory_path() / "sdfgan_cli_test";
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    ~Workspace() { fs::remove_all(dir); }
    std::string path(const std::string& name) const { return (dir / name).string(); }
};

int run(const std::string& args) {
    const std::string cmd = kCli + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

bool file_nonempty(const std::string& path) {
    std::error_code ec;
    return fs::exists(path, ec) && fs::file_size(path, ec) > 0;
}

void write_train_config(const std::string& path, const std::string& kind, int steps) {
    std::ofstream os(path);
    os << "discriminator=" << kind << "\n";
    os << "learning_rate=0.001\nmax_steps=" << steps << "\n";
    os << "batch_size=2\ncritic_steps=1\nmax_stage=0\nbase_points=128\n";
    os << "latent_dim=16\nhidden_dim=16\nlayers=3\nreinjection_layer=1\n";
    os << "seed=5\ncheckpoint_interval=0\n";
}

}  // namespace

TEST_CASE("full procedural pipeline: preprocess, train, sample, upscale, evaluate, render") {
    Workspace ws;

    // Procedural dataset.
    CHECK(run("preprocess --procedural spheres --count 24 --n-uniform 4096 --cloud-points 2048"
              " --seed 3 --out " + ws.path("data.sdfd")) == 0);
    CHECK(file_nonempty(ws.path("data.sdfd")));
    CHECK(file_nonempty(ws.path("data.sdfv")));
    CHECK(file_nonempty(ws.path("data.sdfd.manifest.json")));

    // Train briefly in voxel mode.
    write_train_config(ws.path("train.cfg"), "voxel", 12);
    CHECK(run("train --dataset " + ws.path("data.sdfd") + " --config " + ws.path("train.cfg") +
              " --out " + ws.path("run")) == 0);
    CHECK(file_nonempty(ws.path("run/metrics.csv")));
    CHECK(file_nonempty(ws.path("run/checkpoints/final/generator.sgpc")));
    CHECK(file_nonempty(ws.path("run/manifest.json")));

    // The --discriminator flag selects the branch.
    CHECK(run("train --dataset " + ws.path("data.sdfd") + " --config " + ws.path("train.cfg") +
              " --discriminator point --out " + ws.path("run_point")) == 0);
    {
        std::ifstream is(ws.path("run_point/config.cfg"));
        std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
        CHECK(text.find("discriminator=point") != std::string::npos);
    }

    // Resume continues the step numbering.
    CHECK(run("train --dataset " + ws.path("data.sdfd") + " --config " + ws.path("train.cfg") +
              " --out " + ws.path("run_resumed") + " --resume " + ws.path("run/checkpoints/final")) == 0);
    {
        std::ifstream is(ws.path("run_resumed/metrics.csv"));
        std::string header, first;
        std::getline(is, header);
        std::getline(is, first);
        CHECK(first.substr(0, 3) == "13,");  // continues after step 12
    }

    // Sampling: fixed seed reproduces identical meshes.
    CHECK(run("sample --checkpoint " + ws.path("run/checkpoints/final") +
              " --count 2 --resolution 12 --seed 9 --out " + ws.path("samples_a")) == 0);
    CHECK(run("sample --checkpoint " + ws.path("run/checkpoints/final") +
              " --count 2 --resolution 12 --seed 9 --out " + ws.path("samples_b")) == 0);
    int produced = 0;
    for (const auto& e : fs::directory_iterator(ws.path("samples_a")))
        if (e.path().extension() == ".ply") {
            ++produced;
            std::ifstream fa(e.path(), std::ios::binary);
            std::ifstream fb(ws.path("samples_b") + "/" + e.path().filename().string(),
                             std::ios::binary);
            const std::string a((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
            const std::string b((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
            CHECK(a == b);
        }
    CHECK(produced >= 1);

    // Upscale demo writes the three comparison meshes.
    CHECK(run("upscale-demo --checkpoint " + ws.path("run/checkpoints/final") +
              " --low 8 --high 16 --out " + ws.path("upscale")) == 0);
    for (const char* name : {"low.ply", "upsampled.ply", "direct.ply"})
        CHECK(fs::exists(ws.path("upscale") + "/" + name));
    CHECK(file_nonempty(ws.path("upscale/manifest.json")));

    // Evaluate against the dataset (tiny counts, approximate assignment).
    CHECK(run("evaluate --checkpoint " + ws.path("run/checkpoints/final") + " --reference " +
              ws.path("data.sdfd") + " --points 64 --resolution 12 --emd approx --out " +
              ws.path("report.csv")) == 0);
    {
        std::ifstream is(ws.path("report.csv"));
        std::string header;
        std::getline(is, header);
        CHECK(header == "jsd,mmd_cd,mmd_emd,cov_cd,cov_emd");
    }

    // Interpolate between two dataset shapes (endpoints fitted, 3 frames).
    const std::vector<SdfSampleSet> sets = read_sdfd(ws.path("data.sdfd"));
    REQUIRE(sets.size() >= 2);
    CHECK(run("interpolate --checkpoint " + ws.path("run/checkpoints/final") + " --dataset " +
              ws.path("data.sdfd") + " --shape-a " + sets[0].id + " --shape-b " + sets[1].id +
              " --frames 3 --width 48 --height 48 --fit-points 256 --fit-steps 40 --out " +
              ws.path("frames")) == 0);
    int frames = 0;
    for (const auto& e : fs::directory_iterator(ws.path("frames")))
        if (e.path().extension() == ".ppm") ++frames;
    CHECK(frames == 3);

    // Render one draw.
    CHECK(run("render --checkpoint " + ws.path("run/checkpoints/final") +
              " --width 32 --height 32 --seed 4 --out " + ws.path("draw.ppm")) == 0);
    CHECK(file_nonempty(ws.path("draw.ppm")));
}

TEST_CASE("preprocess on OBJ meshes accepts good shapes and logs rejects with reasons") {
    Workspace ws;
    fs::create_directories(ws.path("objs"));
    write_obj(normalize_mesh(make_icosphere(1.0, 2)), ws.path("objs") + "/sphere_a.obj");
    write_obj(normalize_mesh(make_icosphere(0.8, 2)), ws.path("objs") + "/sphere_b.obj");
    write_obj(make_box({0, 0, 0}, {0.5, 0.4, 0.3}), ws.path("objs") + "/box.obj");
    write_obj(make_open_hemisphere(1.0, 2), ws.path("objs") + "/hemi.obj");

    CHECK(run("preprocess --input " + ws.path("objs") + " --n-uniform 4096 --views 50 --buffer 256"
              " --cloud-points 2048 --out " + ws.path("meshes.sdfd")) == 0);
    const std::vector<SdfSampleSet> sets = read_sdfd(ws.path("meshes.sdfd"));
    CHECK(sets.size() == 3);  // hemisphere rejected

    std::ifstream log(ws.path("meshes.sdfd") + ".rejects.log");
    std::string line;
    bool hemi_rejected = false;
    while (std::getline(log, line))
        if (line.find("hemi") != std::string::npos && line.find("discontinuous") != std::string::npos)
            hemi_rejected = true;
    CHECK(hemi_rejected);
}

TEST_CASE("error paths map to the documented exit codes") {
    Workspace ws;
    // Usage error: no subcommand.
    CHECK(run("") == 1);
    // Data error: empty input directory.
    fs::create_directories(ws.path("empty"));
    CHECK(run("preprocess --input " + ws.path("empty") + " --out " + ws.path("x.sdfd")) == 2);
    // Data error: missing checkpoint.
    CHECK(run("sample --checkpoint " + ws.path("nope") + " --out " + ws.path("out")) == 2);
    // Data error: unreadable dataset.
    CHECK(run("train --dataset " + ws.path("missing.sdfd") + " --out " + ws.path("run")) == 2);
}
