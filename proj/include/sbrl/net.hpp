#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "sbrl/linalg.hpp"

namespace sbrl::net {

enum class Activation : std::uint8_t { identity = 0, relu = 1, tanh = 2 };

/// Parameter-shaped container for gradients and optimizer moments.
struct Params {
    std::vector<Mat> W;
    std::vector<Vec> b;

    double squared_norm() const;
    Params& operator*=(double s);
    Params& operator+=(const Params& o);
};

/// Dense feed-forward network. Inputs and outputs are column batches
/// (features x batch).
class Mlp {
public:
    /// `sizes` = {inputs, hidden..., outputs}; hidden layers use `hidden`.
    Mlp(std::vector<std::size_t> sizes, Activation hidden, Activation output, std::uint64_t seed);
    Mlp(std::vector<std::size_t> sizes, std::vector<Activation> activations, std::uint64_t seed);

    std::size_t inputs() const { return sizes_.front(); }
    std::size_t outputs() const { return sizes_.back(); }
    std::size_t layers() const { return p_.W.size(); }
    const std::vector<std::size_t>& sizes() const { return sizes_; }
    const std::vector<Activation>& activations() const { return act_; }
    std::size_t parameter_count() const;

    struct Cache {
        std::vector<Mat> input;  // input to each layer
        std::vector<Mat> pre;    // pre-activation of each layer
        std::vector<Mat> out;    // activation output of each layer
    };

    Mat forward(const Mat& x) const;
    Vec forward(const Vec& x) const;
    Mat forward(const Mat& x, Cache& cache) const;

    /// Gradients of sum over the batch of <upstream, output>. When
    /// `input_grad` is given it receives d/dx with the same batch layout.
    Params backward(const Cache& cache, const Mat& upstream, Mat* input_grad = nullptr) const;

    Params& params() { return p_; }
    const Params& params() const { return p_; }
    Params zeros_like() const;
    bool finite() const;

    Vec flat() const;
    void set_flat(const Vec& theta);

    /// Binary snapshot: "SBNN", version, layer sizes, activations, then the
    /// little-endian doubles of every W (column-major) and b.
    std::string serialize() const;
    static Mlp deserialize(const std::string& bytes);
    void save(const std::string& path) const;
    static Mlp load(const std::string& path);

    bool same_shape(const Mlp& o) const { return sizes_ == o.sizes_; }

private:

    std::vector<std::size_t> sizes_;
    std::vector<Activation> act_;
    Params p_;
};

/// target <- tau source + (1 - tau) target.
void soft_update(Mlp& target, const Mlp& source, double tau);

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double clip_norm = 10.0;  // global-norm clip, <= 0 disables
};

class Adam {
public:
    Adam(const Mlp& net, AdamConfig cfg = {});

    /// Clips, applies one update, and throws NumericError (leaving the net
    /// untouched) if any parameter would become non-finite.
    void step(Mlp& net, Params grad);

    std::size_t steps() const { return t_; }
    const AdamConfig& config() const { return cfg_; }

private:
    AdamConfig cfg_;
    Params m_, v_;
    std::size_t t_ = 0;
};

}  // namespace sbrl::net
