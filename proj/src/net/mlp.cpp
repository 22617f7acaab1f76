#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "sbrl/error.hpp"
#include "sbrl/net.hpp"
#include "sbrl/rng.hpp"

namespace sbrl::net {

namespace {

constexpr char kMagic[4] = {'S', 'B', 'N', 'N'};
constexpr std::uint32_t kVersion = 1;

Mat activate(Activation a, const Mat& z) {
    switch (a) {
        case Activation::relu: return z.cwiseMax(0.0);
        case Activation::tanh: return z.array().tanh().matrix();
        case Activation::identity: break;
    }
    return z;
}

// d(activation)/dz given the pre-activation and the output.
Mat activation_grad(Activation a, const Mat& z, const Mat& y) {
    switch (a) {
        case Activation::relu: return (z.array() > 0.0).cast<double>().matrix();
        case Activation::tanh: return (1.0 - y.array().square()).matrix();
        case Activation::identity: break;
    }
    return Mat::Ones(z.rows(), z.cols());
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int k = 0; k < 8; ++k) out.push_back(static_cast<char>((v >> (8 * k)) & 0xFF));
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int k = 0; k < 4; ++k) out.push_back(static_cast<char>((v >> (8 * k)) & 0xFF));
}

struct Reader {
    const std::string& s;
    std::size_t pos = 0;

    std::uint64_t u(int bytes) {
        if (pos + static_cast<std::size_t>(bytes) > s.size()) throw DataError("network snapshot is truncated");
        std::uint64_t v = 0;
        for (int k = 0; k < bytes; ++k) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(s[pos++])) << (8 * k);
        return v;
    }
    double d() { return std::bit_cast<double>(u(8)); }
};

}  // namespace

double Params::squared_norm() const {
    double s = 0.0;
    for (const auto& w : W) s += w.squaredNorm();
    for (const auto& v : b) s += v.squaredNorm();
    return s;
}

Params& Params::operator*=(double s) {
    for (auto& w : W) w *= s;
    for (auto& v : b) v *= s;
    return *this;
}

Params& Params::operator+=(const Params& o) {
    for (std::size_t l = 0; l < W.size(); ++l) {
        W[l] += o.W[l];
        b[l] += o.b[l];
    }
    return *this;
}

Mlp::Mlp(std::vector<std::size_t> sizes, Activation hidden, Activation output, std::uint64_t seed)
    : Mlp(sizes, [&] {
          if (sizes.size() < 2) throw ConfigError("an MLP needs at least input and output sizes");
          std::vector<Activation> a(sizes.size() - 1, hidden);
          a.back() = output;
          return a;
      }(), seed) {}

Mlp::Mlp(std::vector<std::size_t> sizes, std::vector<Activation> activations, std::uint64_t seed)
    : sizes_(std::move(sizes)), act_(std::move(activations)) {
    if (sizes_.size() < 2 || act_.size() != sizes_.size() - 1) throw ConfigError("MLP sizes and activations disagree");
    for (auto s : sizes_)
        if (s == 0) throw ConfigError("MLP layer sizes must be >= 1");
    Rng rng(seed);
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
        const auto in = static_cast<Eigen::Index>(sizes_[l]), out = static_cast<Eigen::Index>(sizes_[l + 1]);
        const double bound = 1.0 / std::sqrt(static_cast<double>(in));
        std::uniform_real_distribution<double> u(-bound, bound);
        Mat W(out, in);
        for (Eigen::Index j = 0; j < in; ++j)
            for (Eigen::Index i = 0; i < out; ++i) W(i, j) = u(rng);
        Vec b(out);
        for (auto& x : b) x = u(rng);
        p_.W.push_back(std::move(W));
        p_.b.push_back(std::move(b));
    }
}

std::size_t Mlp::parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < layers(); ++l) n += static_cast<std::size_t>(p_.W[l].size() + p_.b[l].size());
    return n;
}

Mat Mlp::forward(const Mat& x) const {
    if (static_cast<std::size_t>(x.rows()) != inputs()) {
        std::ostringstream msg;
        msg << "network input has " << x.rows() << " rows, expected " << inputs();
        throw DomainError(msg.str());
    }
    Mat a = x;
    for (std::size_t l = 0; l < layers(); ++l) a = activate(act_[l], (p_.W[l] * a).colwise() + p_.b[l]);
    return a;
}

Vec Mlp::forward(const Vec& x) const { return forward(Mat(x)).col(0); }

Mat Mlp::forward(const Mat& x, Cache& cache) const {
    if (static_cast<std::size_t>(x.rows()) != inputs()) throw DomainError("network input dimension mismatch");
    cache.input.assign(1, x);
    cache.pre.clear();
    cache.out.clear();
    for (std::size_t l = 0; l < layers(); ++l) {
        cache.pre.push_back((p_.W[l] * cache.input.back()).colwise() + p_.b[l]);
        cache.out.push_back(activate(act_[l], cache.pre.back()));
        if (l + 1 < layers()) cache.input.push_back(cache.out.back());
    }
    return cache.out.back();
}

Params Mlp::backward(const Cache& cache, const Mat& upstream, Mat* input_grad) const {
    if (cache.pre.size() != layers()) throw DomainError("backward needs a cache from forward");
    if (upstream.rows() != cache.out.back().rows() || upstream.cols() != cache.out.back().cols())
        throw DomainError("upstream gradient shape does not match the network output");
    Params g = zeros_like();
    Mat delta = upstream;
    for (std::size_t l = layers(); l-- > 0;) {
        delta = delta.cwiseProduct(activation_grad(act_[l], cache.pre[l], cache.out[l]));
        g.W[l] = delta * cache.input[l].transpose();
        g.b[l] = delta.rowwise().sum();
        if (l > 0 || input_grad) delta = p_.W[l].transpose() * delta;
    }
    if (input_grad) *input_grad = delta;
    return g;
}

Params Mlp::zeros_like() const {
    Params z;
    for (std::size_t l = 0; l < layers(); ++l) {
        z.W.push_back(Mat::Zero(p_.W[l].rows(), p_.W[l].cols()));
        z.b.push_back(Vec::Zero(p_.b[l].size()));
    }
    return z;
}

bool Mlp::finite() const {
    for (std::size_t l = 0; l < layers(); ++l)
        if (!p_.W[l].allFinite() || !p_.b[l].allFinite()) return false;
    return true;
}

Vec Mlp::flat() const {
    Vec theta(static_cast<Eigen::Index>(parameter_count()));
    Eigen::Index k = 0;
    for (std::size_t l = 0; l < layers(); ++l) {
        theta.segment(k, p_.W[l].size()) = Eigen::Map<const Vec>(p_.W[l].data(), p_.W[l].size());
        k += p_.W[l].size();
        theta.segment(k, p_.b[l].size()) = p_.b[l];
        k += p_.b[l].size();
    }
    return theta;
}

void Mlp::set_flat(const Vec& theta) {
    if (static_cast<std::size_t>(theta.size()) != parameter_count()) throw DomainError("flat parameter size mismatch");
    Eigen::Index k = 0;
    for (std::size_t l = 0; l < layers(); ++l) {
        Eigen::Map<Vec>(p_.W[l].data(), p_.W[l].size()) = theta.segment(k, p_.W[l].size());
        k += p_.W[l].size();
        p_.b[l] = theta.segment(k, p_.b[l].size());
        k += p_.b[l].size();
    }
}

std::string Mlp::serialize() const {
    std::string out(kMagic, 4);
    put_u32(out, kVersion);
    put_u32(out, static_cast<std::uint32_t>(sizes_.size()));
    for (auto s : sizes_) put_u64(out, s);
    for (auto a : act_) out.push_back(static_cast<char>(a));
    const Vec theta = flat();
    for (double x : theta) put_u64(out, std::bit_cast<std::uint64_t>(x));
    return out;
}

Mlp Mlp::deserialize(const std::string& bytes) {
    if (bytes.size() < 12 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw DataError("not a network snapshot");
    Reader r{bytes, 4};
    if (r.u(4) != kVersion) throw DataError("unsupported network snapshot version");
    const auto n = r.u(4);
    if (n < 2 || n > 64) throw DataError("corrupt network snapshot header");
    std::vector<std::size_t> sizes;
    for (std::uint64_t k = 0; k < n; ++k) sizes.push_back(r.u(8));
    std::vector<Activation> act;
    for (std::uint64_t k = 0; k + 1 < n; ++k) {
        const auto a = r.u(1);
        if (a > 2) throw DataError("unknown activation in network snapshot");
        act.push_back(static_cast<Activation>(a));
    }
    Mlp net(sizes, act, 0);
    Vec theta(static_cast<Eigen::Index>(net.parameter_count()));
    for (auto& x : theta) x = r.d();
    if (r.pos != bytes.size()) throw DataError("trailing bytes in network snapshot");
    net.set_flat(theta);
    return net;
}

void Mlp::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path);
    const auto bytes = serialize();
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Mlp Mlp::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return deserialize(buf.str());
}

void soft_update(Mlp& target, const Mlp& source, double tau) {
    if (!target.same_shape(source)) throw DomainError("soft_update: architectures differ");
    if (!(tau >= 0.0 && tau <= 1.0)) throw DomainError("soft_update: tau must be in [0, 1]");
    auto& t = target.params();
    const auto& s = source.params();
    for (std::size_t l = 0; l < t.W.size(); ++l) {
        t.W[l] = tau * s.W[l] + (1.0 - tau) * t.W[l];
        t.b[l] = tau * s.b[l] + (1.0 - tau) * t.b[l];
    }
}

Adam::Adam(const Mlp& net, AdamConfig cfg) : cfg_(cfg), m_(net.zeros_like()), v_(net.zeros_like()) {
    if (!(cfg_.lr > 0.0)) throw ConfigError("learning rate must be > 0");
}

void Adam::step(Mlp& net, Params grad) {
    if (grad.W.size() != m_.W.size()) throw DomainError("gradient shape does not match the optimizer");
    if (cfg_.clip_norm > 0.0) {
        const double norm = std::sqrt(grad.squared_norm());
        if (!std::isfinite(norm)) throw NumericError("non-finite gradient");
        if (norm > cfg_.clip_norm) grad *= cfg_.clip_norm / norm;
    }
    const std::size_t t = t_ + 1;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t));
    Params m = m_, v = v_, p = net.params();
    auto update = [&](auto& param, auto& mm, auto& vv, const auto& g) {
        mm = cfg_.beta1 * mm + (1.0 - cfg_.beta1) * g;
        vv = cfg_.beta2 * vv + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
        param.array() -= cfg_.lr * (mm.array() / c1) / ((vv.array() / c2).sqrt() + cfg_.eps);
    };
    for (std::size_t l = 0; l < p.W.size(); ++l) {
        update(p.W[l], m.W[l], v.W[l], grad.W[l]);
        update(p.b[l], m.b[l], v.b[l], grad.b[l]);
    }
    for (std::size_t l = 0; l < p.W.size(); ++l)
        if (!p.W[l].allFinite() || !p.b[l].allFinite()) throw NumericError("optimizer step produced non-finite parameters");
    net.params() = std::move(p);
    m_ = std::move(m);
    v_ = std::move(v);
    t_ = t;
}

}  // namespace sbrl::net
