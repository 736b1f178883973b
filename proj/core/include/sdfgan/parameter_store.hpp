#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sdfgan/rng.hpp"
#include "sdfgan/tape.hpp"
#include "sdfgan/tensor.hpp"

namespace sdfgan {

// Named trainable arrays plus per-parameter RMSprop state. Names are unique
// and shapes are fixed at creation. Reads may be shared across threads;
// writes (updates, loads) require exclusive access.
class ParameterStore {
public:
    struct Entry {
        Tensor value;
        Tensor sq_avg;  // running average of squared gradients
    };

    // Creates a parameter; rejects duplicate names.
    void create(const std::string& name, Tensor init);
    // Uniform init in +-(1/sqrt(fan_in)).
    void create_uniform(const std::string& name, std::vector<int> shape, int fan_in, Rng& rng);

    bool has(const std::string& name) const { return entries_.count(name) != 0; }
    const Tensor& get(const std::string& name) const;
    Tensor& mutable_value(const std::string& name);
    std::size_t count() const { return entries_.size(); }
    std::vector<std::string> names() const;

    // Registers every parameter as a leaf (trainable) or constant (frozen)
    // on the tape; returns name -> node id in deterministic (sorted) order.
    std::map<std::string, int> leaves_into(Tape& t) const;
    std::map<std::string, int> constants_into(Tape& t) const;

    // theta -= lr * g / (sqrt(v) + eps), v = alpha*v + (1-alpha)*g^2.
    // No clipping of gradients or weights anywhere in the update path.
    void rmsprop_update(const std::map<std::string, Tensor>& grads, double lr,
                        double alpha = 0.99, double eps = 1e-8);

    void fill(double v);
    bool all_finite() const;
    // Order- and content-sensitive digest of parameter values.
    std::uint64_t value_hash() const;

    // RMSprop running averages packaged as a store (for checkpointing).
    ParameterStore optimizer_state() const;
    void load_optimizer_state(const ParameterStore& state);

    // Checkpoint container: magic "SGPC", version u32, count u32, then per
    // entry: name length u16 + UTF-8 name, rank u8, extents u32 each, values
    // f64 little-endian. Optimizer state is stored as a second SGPC file by
    // the trainer, not here.
    void save(const std::string& path) const;
    static ParameterStore load(const std::string& path);

private:
    std::map<std::string, Entry> entries_;
};

}  // namespace sdfgan
