#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <thread>

#include "sdfgan/errors.hpp"
#include "sdfgan/parameter_store.hpp"

using namespace sdfgan;
namespace fs = std::filesystem;

namespace {
std::string temp_path(const std::string& name) {
    return (fs::temp_directory_path() / name).string();
}
}  // namespace

TEST_CASE("duplicate names are rejected") {
    ParameterStore store;
    store.create("w", Tensor::zeros({2, 2}));
    CHECK_THROWS_AS(store.create("w", Tensor::zeros({2, 2})), DataError);
}

TEST_CASE("checkpoint round trip preserves values and layout byte for byte") {
    Rng rng(9);
    ParameterStore store;
    store.create_uniform("fc1.weight", {3, 4}, 3, rng);
    store.create_uniform("fc1.bias", {4}, 3, rng);
    store.create("scalar", Tensor::scalar(1.25));

    const std::string p1 = temp_path("sgpc_test_1.sgpc");
    const std::string p2 = temp_path("sgpc_test_2.sgpc");
    store.save(p1);
    ParameterStore loaded = ParameterStore::load(p1);
    loaded.save(p2);

    std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
    const std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    const std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(b1 == b2);
    CHECK(b1.substr(0, 4) == "SGPC");
    CHECK(loaded.get("fc1.weight").shape == std::vector<int>{3, 4});
    CHECK(loaded.get("scalar").data[0] == 1.25);
    fs::remove(p1);
    fs::remove(p2);
}

TEST_CASE("corrupt checkpoints are rejected") {
    const std::string p = temp_path("sgpc_bad.sgpc");
    {
        std::ofstream os(p, std::ios::binary);
        os << "NOPE1234";
    }
    CHECK_THROWS_AS(ParameterStore::load(p), DataError);
    fs::remove(p);
    CHECK_THROWS_AS(ParameterStore::load(temp_path("does_not_exist.sgpc")), DataError);
}

TEST_CASE("rmsprop update follows the running-average rule and never clips") {
    ParameterStore store;
    store.create("w", Tensor({1}, {100.0}));
    std::map<std::string, Tensor> grads;
    grads.emplace("w", Tensor({1}, {2.0}));
    store.rmsprop_update(grads, 0.1, 0.99, 1e-8);
    // v = 0.01 * 4 = 0.04; w -= 0.1 * 2 / (0.2 + 1e-8)
    CHECK(store.get("w").data[0] == doctest::Approx(100.0 - 0.1 * 2.0 / (0.2 + 1e-8)));

    // A zero-gradient update leaves an extreme weight exactly in place: there
    // is no weight clipping in the update path.
    ParameterStore big;
    big.create("w", Tensor({1}, {1e6}));
    std::map<std::string, Tensor> zero;
    zero.emplace("w", Tensor({1}, {0.0}));
    big.rmsprop_update(zero, 0.1);
    CHECK(big.get("w").data[0] == 1e6);
}

TEST_CASE("gradient shape mismatches are rejected") {
    ParameterStore store;
    store.create("w", Tensor::zeros({2, 2}));
    std::map<std::string, Tensor> grads;
    grads.emplace("w", Tensor::zeros({4}));
    CHECK_THROWS_AS(store.rmsprop_update(grads, 0.1), DataError);
}

TEST_CASE("optimizer state survives a checkpoint round trip") {
    ParameterStore store;
    store.create("w", Tensor({2}, {1.0, 2.0}));
    std::map<std::string, Tensor> grads;
    grads.emplace("w", Tensor({2}, {0.5, -0.5}));
    store.rmsprop_update(grads, 0.01);

    const std::string p = temp_path("sgpc_opt.sgpc");
    store.optimizer_state().save(p);
    ParameterStore fresh;
    fresh.create("w", Tensor({2}, {1.0, 2.0}));
    fresh.load_optimizer_state(ParameterStore::load(p));
    CHECK(fresh.optimizer_state().get("w").data == store.optimizer_state().get("w").data);
    fs::remove(p);
}

TEST_CASE("concurrent reads are safe") {
    Rng rng(4);
    ParameterStore store;
    store.create_uniform("w", {64, 64}, 64, rng);
    double sums[4] = {};
    std::vector<std::thread> threads;
    for (int i = 0; i < 4; ++i)
        threads.emplace_back([&, i] {
            double acc = 0.0;
            for (int rep = 0; rep < 50; ++rep)
                for (double v : store.get("w").data) acc += v;
            sums[i] = acc;
        });
    for (auto& th : threads) th.join();
    for (int i = 1; i < 4; ++i) CHECK(sums[i] == sums[0]);
}
