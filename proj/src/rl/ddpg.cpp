#include <algorithm>
#include <cmath>
#include <sstream>

#include "sbrl/error.hpp"
#include "sbrl/rl.hpp"

namespace sbrl::rl {

namespace {

std::vector<std::size_t> layer_sizes(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out) {
    std::vector<std::size_t> s{in};
    s.insert(s.end(), hidden.begin(), hidden.end());
    s.push_back(out);
    return s;
}

Mat stack(const Mat& top, const Mat& bottom) {
    Mat x(top.rows() + bottom.rows(), top.cols());
    x << top, bottom;
    return x;
}

void accumulate(net::Params* into, const net::Params& g) {
    if (!into) return;
    if (into->W.empty()) {
        *into = g;
    } else {
        *into += g;
    }
}

double median_abs(const Vec& q) {
    std::vector<double> v(q.size());
    for (Eigen::Index i = 0; i < q.size(); ++i) v[static_cast<std::size_t>(i)] = std::abs(q(i));
    if (v.empty()) return 0.0;
    auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    return *mid;
}

}  // namespace

DdpgConfig DdpgConfig::cppi_defaults() {
    DdpgConfig c;
    c.lambda_e = 0.3;
    c.pretrain_steps = 1000;
    return c;
}

std::vector<std::string> DdpgConfig::validate() const {
    if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("ddpg gamma must be in [0, 1)");
    if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("ddpg tau must be in (0, 1]");
    if (batch == 0 || buffer < batch) throw ConfigError("ddpg needs 1 <= batch <= buffer");
    if (!(actor_lr > 0.0) || !(critic_lr > 0.0)) throw ConfigError("ddpg learning rates must be > 0");
    if (!(lambda_e >= 0.0)) throw ConfigError("lambda_e must be >= 0");
    if (!(lambda_c >= 0.0 && lambda_c <= 1.0)) throw ConfigError("lambda_c must be in [0, 1]");
    if (ensemble == 0) throw ConfigError("ensemble size must be >= 1");
    if (!(margin >= 0.0) || !(margin_radius >= 0.0)) throw ConfigError("margin parameters must be >= 0");
    if (!(noise.start >= 0.0) || !(noise.end >= 0.0)) throw ConfigError("noise scales must be >= 0");
    if (!(reward_scale >= 0.0)) throw ConfigError("reward_scale must be >= 0");
    if (!(divergence_limit > 0.0)) throw ConfigError("divergence_limit must be > 0");
    std::vector<std::string> warnings;
    if (ensemble == 1 && lambda_c != 1.0)
        warnings.emplace_back("lambda_c has no effect with a single agent; the correlation term is dropped");
    return warnings;
}

double margin(const Vec& expert, const Vec& a, double m, double rho) {
    if (!(rho > 0.0)) throw DomainError("margin radius must be > 0");
    return m * std::min(1.0, (a - expert).norm() / rho);
}

Vec td_targets(const net::Mlp& target_actor, const net::Mlp& target_critic, const Batch& batch, double gamma,
               double bound) {
    const Mat a_next = bound * target_actor.forward(batch.s_next);
    const Mat q_next = target_critic.forward(stack(batch.s_next, a_next));
    Vec y = batch.r;
    for (Eigen::Index k = 0; k < y.size(); ++k)
        if (!batch.done[static_cast<std::size_t>(k)]) y(k) += gamma * q_next(0, k);
    return y;
}

double critic_td_loss(const net::Mlp& critic, const Batch& batch, const Vec& y, net::Params* grad, Vec* q) {
    net::Mlp::Cache cache;
    const Mat out = critic.forward(stack(batch.s, batch.a), cache);
    const Mat diff = out - y.transpose();
    const auto n = static_cast<double>(y.size());
    if (q) *q = out.row(0).transpose();
    if (grad) accumulate(grad, critic.backward(cache, 2.0 * diff / n));
    return diff.squaredNorm() / n;
}

double cppi_margin_loss(const net::Mlp& critic, const Mat& states, const Mat& expert, const std::vector<Mat>& candidates,
                        double m, double rho, net::Params* grad) {
    if (candidates.empty()) throw DomainError("margin loss needs at least one candidate");
    const Eigen::Index n = states.cols();
    if (n == 0) return 0.0;
    std::vector<Mat> q;
    for (const auto& c : candidates) q.push_back(critic.forward(stack(states, c)));
    const Mat q_expert = critic.forward(stack(states, expert));

    Mat chosen(expert.rows(), n);
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t arg = 0;
        for (std::size_t k = 0; k < candidates.size(); ++k) {
            const double v = q[k](0, i) + margin(expert.col(i), candidates[k].col(i), m, rho);
            if (v > best) {
                best = v;
                arg = k;
            }
        }
        chosen.col(i) = candidates[arg].col(i);
        total += best - q_expert(0, i);
    }
    const double nn = static_cast<double>(n);
    if (grad) {
        net::Mlp::Cache c1, c2;
        critic.forward(stack(states, chosen), c1);
        critic.forward(stack(states, expert), c2);
        accumulate(grad, critic.backward(c1, Mat::Constant(1, n, 1.0 / nn)));
        accumulate(grad, critic.backward(c2, Mat::Constant(1, n, -1.0 / nn)));
    }
    return total / nn;
}

double correlation_penalty(const std::vector<Mat>& actions, std::vector<Mat>* grads) {
    const std::size_t K = actions.size();
    std::vector<Vec> centred;
    std::vector<double> norms;
    for (const auto& a : actions) {
        Vec x = Eigen::Map<const Vec>(a.data(), a.size());
        x.array() -= x.mean();
        norms.push_back(x.norm());
        centred.push_back(std::move(x));
    }
    if (grads) {
        grads->clear();
        for (const auto& a : actions) grads->push_back(Mat::Zero(a.rows(), a.cols()));
    }
    double total = 0.0;
    for (std::size_t i = 0; i < K; ++i)
        for (std::size_t j = i + 1; j < K; ++j) {
            if (norms[i] == 0.0 || norms[j] == 0.0) continue;
            const double denom = norms[i] * norms[j];
            const double r = centred[i].dot(centred[j]) / denom;
            total += r * r;
            if (!grads) continue;
            // dr/dx_i = y_c / (|x_c||y_c|) - r x_c / |x_c|^2 (centring is absorbed).
            const Vec gi = 2.0 * r * (centred[j] / denom - r * centred[i] / (norms[i] * norms[i]));
            const Vec gj = 2.0 * r * (centred[i] / denom - r * centred[j] / (norms[j] * norms[j]));
            Eigen::Map<Vec>((*grads)[i].data(), (*grads)[i].size()) += gi;
            Eigen::Map<Vec>((*grads)[j].data(), (*grads)[j].size()) += gj;
        }
    return total;
}

ActorGrad actor_gradient(const net::Mlp& actor, const CriticFn& critic, const Mat& states, double bound,
                         const Mat* extra) {
    const auto n = static_cast<double>(states.cols());
    net::Mlp::Cache ca;
    ActorGrad out;
    out.actions = bound * actor.forward(states, ca);
    Mat dq;
    out.objective = critic(states, out.actions, &dq).mean();
    Mat ga = -dq / n;
    if (extra) ga += *extra;
    out.grad = actor.backward(ca, bound * ga);
    return out;
}

ActorGrad actor_gradient(const net::Mlp& actor, const net::Mlp& critic, const Mat& states, double bound,
                         const Mat* extra) {
    const auto D = static_cast<Eigen::Index>(actor.outputs());
    const CriticFn fn = [&](const Mat& s, const Mat& a, Mat* dq_da) -> Vec {
        net::Mlp::Cache cc;
        const Mat q = critic.forward(stack(s, a), cc);
        if (dq_da) {
            Mat gx;
            critic.backward(cc, Mat::Ones(1, s.cols()), &gx);
            *dq_da = gx.bottomRows(D);
        }
        return q.row(0).transpose();
    };
    return actor_gradient(actor, fn, states, bound, extra);
}

// ---------------------------------------------------------------------------
// DdpgAgent

DdpgAgent::DdpgAgent(std::size_t state_dim, std::size_t action_dim, double bound, DdpgConfig cfg, std::uint64_t seed)
    : S_(state_dim), D_(action_dim), bound_(bound), cfg_(std::move(cfg)), rng_(seed), buffer_(cfg_.buffer) {
    warnings_ = cfg_.validate();
    if (S_ == 0 || D_ == 0) throw ConfigError("ddpg needs non-empty states and actions");
    if (!(bound_ > 0.0)) throw ConfigError("action bound must be > 0");
    if (cfg_.margin_radius == 0.0) cfg_.margin_radius = bound_;  // half of the box width 2 * bound
    net::AdamConfig actor_opt{.lr = cfg_.actor_lr, .clip_norm = cfg_.clip_norm};
    net::AdamConfig critic_opt{.lr = cfg_.critic_lr, .clip_norm = cfg_.clip_norm};
    for (std::size_t k = 0; k < cfg_.ensemble; ++k) {
        net::Mlp actor(layer_sizes(S_, cfg_.hidden, D_), net::Activation::relu, net::Activation::tanh,
                       derive_seed(seed, 2 * k));
        net::Mlp critic(layer_sizes(S_ + D_, cfg_.hidden, 1), net::Activation::relu, net::Activation::identity,
                        derive_seed(seed, 2 * k + 1));
        members_.push_back(Member{actor, critic, actor, critic, net::Adam(actor, actor_opt), net::Adam(critic, critic_opt)});
    }
    reward_scale_ = cfg_.reward_scale > 0.0 ? cfg_.reward_scale : 1.0;
    reset_noise();
}

double DdpgAgent::noise_scale() const {
    const auto& n = cfg_.noise;
    if (n.decay_steps == 0) return n.end;
    const double f = std::min(1.0, static_cast<double>(steps_) / static_cast<double>(n.decay_steps));
    return n.start + f * (n.end - n.start);
}

void DdpgAgent::reset_noise() { ou_state_ = Vec::Zero(static_cast<Eigen::Index>(D_)); }

Vec DdpgAgent::policy(const Vec& s) const {
    Vec a = Vec::Zero(static_cast<Eigen::Index>(D_));
    for (const auto& m : members_) a += m.actor.forward(s);
    return bound_ * a / static_cast<double>(members_.size());
}

Vec DdpgAgent::act(const Vec& s, bool explore) {
    Vec a = policy(s);
    if (!explore) return a;
    const double sigma = noise_scale() * bound_;
    for (Eigen::Index d = 0; d < a.size(); ++d) {
        if (cfg_.noise.kind == NoiseConfig::Kind::ou) {
            ou_state_(d) += -cfg_.noise.ou_theta * ou_state_(d) + sigma * std_normal(rng_);
            a(d) += ou_state_(d);
        } else {
            a(d) += sigma * std_normal(rng_);
        }
    }
    return a.cwiseMax(-bound_).cwiseMin(bound_);
}

LossReport DdpgAgent::losses(const Batch& batch) { return compute(batch, false); }
LossReport DdpgAgent::update(const Batch& batch) { return compute(batch, true); }

LossReport DdpgAgent::compute(const Batch& batch, bool apply) {
    const std::size_t K = members_.size();
    const bool ensemble = K > 1;
    LossReport rep;

    Mat expert_states;
    if (cfg_.lambda_e > 0.0 && !batch.with_expert.empty()) {
        expert_states.resize(batch.s.rows(), static_cast<Eigen::Index>(batch.with_expert.size()));
        for (std::size_t k = 0; k < batch.with_expert.size(); ++k)
            expert_states.col(static_cast<Eigen::Index>(k)) = batch.s.col(static_cast<Eigen::Index>(batch.with_expert[k]));
    }

    for (auto& m : members_) {
        const Vec y = td_targets(m.target_actor, m.target_critic, batch, cfg_.gamma, bound_);
        net::Params gc;
        Vec q;
        const double td = critic_td_loss(m.critic, batch, y, &gc, &q);
        const double med = median_abs(q);
        if (!(med <= cfg_.divergence_limit)) {
            std::ostringstream msg;
            msg << "critic diverged: median |Q| = " << med << " exceeds " << cfg_.divergence_limit << " after "
                << steps_ << " steps (episode " << episode_ << ", td loss " << td << ")";
            throw TrainingDiverged(msg.str());
        }
        if (ensemble) gc *= cfg_.lambda_c;
        rep.td += td / static_cast<double>(K);

        if (expert_states.cols() > 0) {
            const Mat pi = bound_ * m.actor.forward(expert_states);
            std::vector<Mat> cands{pi, batch.expert};
            const double sd = cfg_.candidate_noise * bound_;
            for (std::size_t c = 0; c < cfg_.margin_candidates; ++c) {
                Mat p = pi;
                for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] += sd * std_normal(rng_);
                cands.push_back(p.cwiseMax(-bound_).cwiseMin(bound_));
            }
            net::Params ge;
            const double je =
                cppi_margin_loss(m.critic, expert_states, batch.expert, cands, cfg_.margin, cfg_.margin_radius, &ge);
            ge *= cfg_.lambda_e;
            gc += ge;
            rep.j_e += je / static_cast<double>(K);
        }
        if (apply) m.critic_opt.step(m.critic, std::move(gc));
    }

    std::vector<Mat> extra;
    if (ensemble) {
        std::vector<Mat> acts;
        for (const auto& m : members_) acts.push_back(bound_ * m.actor.forward(batch.s));
        rep.corr = correlation_penalty(acts, &extra);
        for (auto& e : extra) e *= 1.0 - cfg_.lambda_c;
    }
    for (std::size_t k = 0; k < K; ++k) {
        auto& m = members_[k];
        const auto ag = actor_gradient(m.actor, m.critic, batch.s, bound_, ensemble ? &extra[k] : nullptr);
        rep.actor -= ag.objective / static_cast<double>(K);
        if (!apply) continue;
        m.actor_opt.step(m.actor, ag.grad);
        net::soft_update(m.target_actor, m.actor, cfg_.tau);
        net::soft_update(m.target_critic, m.critic, cfg_.tau);
    }

    rep.total = ensemble ? cfg_.lambda_c * rep.td + (1.0 - cfg_.lambda_c) * rep.corr + cfg_.lambda_e * rep.j_e
                         : rep.td + cfg_.lambda_e * rep.j_e;
    return rep;
}

void DdpgAgent::pretrain(VecEnv& env) {
    if (cfg_.pretrain_steps == 0) return;
    env.reset();
    if (!env.expert_action()) {
        warnings_.emplace_back("pre-training skipped: the environment has no expert");
        return;
    }
    if (cfg_.reward_scale == 0.0) reward_scale_ = 1.0 / env.reward_unit();
    // Expert rollouts until one minibatch is available.
    while (buffer_.size() < cfg_.batch) {
        Vec s = env.reset();
        while (true) {
            const Vec a = *env.expert_action();
            const auto st = env.step(a);
            buffer_.push({s, a, st.reward * reward_scale_, st.state, st.done, a, 0});
            s = st.state;
            if (st.done) break;
        }
    }
    for (std::size_t k = 0; k < cfg_.pretrain_steps; ++k) update(buffer_.sample(cfg_.batch, rng_));
}

std::vector<EpisodeLog> DdpgAgent::train(VecEnv& env, std::size_t episodes,
                                         const std::function<void(std::size_t, const EpisodeLog&)>& after_episode) {
    if (env.state_dim() != S_ || env.action_dim() != D_) throw DomainError("ddpg agent and environment sizes differ");
    if (cfg_.reward_scale == 0.0) reward_scale_ = 1.0 / env.reward_unit();
    if (episode_ == 0 && cfg_.pretrain_steps > 0) pretrain(env);
    std::vector<EpisodeLog> logs;
    for (std::size_t e = 0; e < episodes; ++e, ++episode_) {
        EpisodeLog log;
        log.episode = episode_;
        Vec s = env.reset();
        reset_noise();
        std::size_t updates = 0;
        while (true) {
            const Vec a = act(s, true);
            auto expert = env.expert_action();
            const auto st = env.step(a);
            buffer_.push({s, a, st.reward * reward_scale_, st.state, st.done, std::move(expert), 0});
            log.ret += st.reward;
            ++steps_;
            if (buffer_.size() >= cfg_.batch) {
                const auto rep = update(buffer_.sample(cfg_.batch, rng_));
                log.loss_critic += rep.td;
                log.loss_actor += rep.actor;
                log.j_e += rep.j_e;
                log.corr_penalty += rep.corr;
                ++updates;
            }
            s = st.state;
            if (st.done) break;
        }
        if (updates > 0) {
            const double u = static_cast<double>(updates);
            log.loss_critic /= u;
            log.loss_actor /= u;
            log.j_e /= u;
            log.corr_penalty /= u;
        }
        logs.push_back(log);
        if (after_episode) after_episode(episode_, log);
    }
    return logs;
}

double DdpgAgent::evaluate(VecEnv& env) const {
    Vec s = env.reset();
    double ret = 0.0;
    while (true) {
        const auto st = env.step(policy(s));
        ret += st.reward;
        s = st.state;
        if (st.done) break;
    }
    return ret;
}

}  // namespace sbrl::rl
