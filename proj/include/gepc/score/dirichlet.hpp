#pragma once

// Finite Dirichlet mixture over soft-assignment vectors, fitted by EM with
// Newton concentration updates, weight pruning and greedy BIC-driven
// component elimination. Normality = log-density under the mixture.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>

#include "gepc/cluster/kmeans.hpp"

namespace gepc {

using Simplex = std::vector<real>;

inline constexpr real kSimplexEpsilon = real(1e-6);
inline constexpr real kAlphaMin = real(1e-3);
inline constexpr real kAlphaMax = real(1e6);

/// Floors entries at eps and rescales the others so the sum stays 1 and no
/// entry ends below eps.
inline Simplex clamp_to_simplex(Simplex p, real eps = kSimplexEpsilon) {
    const std::size_t k = p.size();
    if (k == 0) throw Error("clamp_to_simplex: empty vector");
    if (eps * static_cast<real>(k) >= 1) throw ConfigError("clamp_to_simplex: epsilon too large for K");
    real total = 0;
    for (real v : p) {
        if (!(v >= 0)) throw Error("clamp_to_simplex: negative or NaN entry");
        total += v;
    }
    if (std::abs(total - 1) > real(1e-6)) throw Error("clamp_to_simplex: entries sum to " + std::to_string(total));
    std::vector<bool> floored(k, false);
    for (;;) {
        real free_mass = 0;
        std::size_t n_floored = 0;
        for (std::size_t i = 0; i < k; ++i) {
            if (!floored[i] && p[i] < eps) floored[i] = true;
            if (floored[i]) ++n_floored;
            else free_mass += p[i];
        }
        const real target = 1 - eps * static_cast<real>(n_floored);
        bool changed = false;
        for (std::size_t i = 0; i < k; ++i) {
            if (floored[i]) {
                p[i] = eps;
                continue;
            }
            p[i] *= target / free_mass;
            if (p[i] < eps) changed = true;
        }
        if (!changed) return p;
    }
}

inline real dirichlet_logpdf(const Simplex& p, const std::vector<real>& alpha) {
    if (p.size() != alpha.size()) throw ShapeError("dirichlet_logpdf: dimension mismatch");
    real a0 = 0, s = 0;
    for (std::size_t k = 0; k < p.size(); ++k) {
        if (!(alpha[k] > 0)) throw ConfigError("dirichlet_logpdf: concentrations must be positive");
        a0 += alpha[k];
        s += (alpha[k] - 1) * std::log(p[k]) - std::lgamma(alpha[k]);
    }
    return s + std::lgamma(a0);
}

/// One draw via normalized Gamma variates.
inline Simplex sample_dirichlet(const std::vector<real>& alpha, Rng& rng) {
    Simplex p(alpha.size());
    real s = 0;
    for (std::size_t k = 0; k < alpha.size(); ++k) s += p[k] = std::gamma_distribution<real>(alpha[k], 1)(rng);
    for (auto& v : p) v /= s;
    return p;
}

struct DirichletMixture {
    std::vector<real> weights;
    std::vector<std::vector<real>> alpha;  // [M][K]

    std::size_t components() const noexcept { return weights.size(); }
    std::size_t dims() const { return alpha.empty() ? 0 : alpha[0].size(); }
    bool fitted() const noexcept { return !weights.empty(); }

    std::vector<real> mean(std::size_t m) const {
        std::vector<real> out = alpha.at(m);
        const real a0 = std::accumulate(out.begin(), out.end(), real{0});
        for (auto& v : out) v /= a0;
        return out;
    }

    /// log Σ_m w_m Dir(p; α_m) for an already clamped point.
    real log_density(const Simplex& p) const {
        if (!fitted()) throw Error("Dirichlet mixture is not fitted");
        real best = -std::numeric_limits<real>::infinity();
        std::vector<real> terms(components());
        for (std::size_t m = 0; m < components(); ++m) {
            terms[m] = std::log(weights[m]) + dirichlet_logpdf(p, alpha[m]);
            best = std::max(best, terms[m]);
        }
        real s = 0;
        for (real t : terms) s += std::exp(t - best);
        return best + std::log(s);
    }
};

struct MixtureOptions {
    std::size_t initial_components = 10;
    real prune_threshold = 0;  // 0 -> 1 / (10 * initial_components)
    std::size_t max_iterations = 500;
    real tolerance = real(1e-7);  // on mean log-likelihood change
    std::size_t alpha_iterations = 50;
    std::size_t trial_iterations = 40;  // EM budget when ranking elimination candidates
    bool bic_elimination = true;
    std::uint64_t seed = 0;
};

struct MixtureFit {
    DirichletMixture mixture;
    std::vector<real> log_likelihood;          // one entry per E-step
    std::vector<bool> after_structure_change;  // entry i follows a prune or elimination
    std::size_t pruned = 0;
    std::size_t eliminated = 0;
    real bic = 0;
};

namespace detail {

/// Per-point Dirichlet log-likelihood given mean log-proportions.
inline real alpha_objective(const std::vector<real>& alpha, const std::vector<real>& mean_log_p) {
    real a0 = 0, s = 0;
    for (std::size_t k = 0; k < alpha.size(); ++k) {
        a0 += alpha[k];
        s += (alpha[k] - 1) * mean_log_p[k] - std::lgamma(alpha[k]);
    }
    return s + std::lgamma(a0);
}

/// Weighted Dirichlet maximum likelihood by Newton steps on the concave
/// objective (diagonal-plus-rank-one Hessian), with step halving so every
/// accepted step increases the objective and keeps α inside its bounds.
inline void fit_alpha(std::vector<real>& alpha, const std::vector<real>& mean_log_p, std::size_t iterations) {
    const std::size_t k = alpha.size();
    std::vector<real> g(k), q(k), next(k);
    real f = alpha_objective(alpha, mean_log_p);
    for (std::size_t it = 0; it < iterations; ++it) {
        const real a0 = std::accumulate(alpha.begin(), alpha.end(), real{0});
        const real psi0 = boost::math::digamma(a0), z = boost::math::trigamma(a0);
        real sum_gq = 0, sum_1q = 0;
        for (std::size_t j = 0; j < k; ++j) {
            g[j] = psi0 - boost::math::digamma(alpha[j]) + mean_log_p[j];
            q[j] = -boost::math::trigamma(alpha[j]);
            sum_gq += g[j] / q[j];
            sum_1q += 1 / q[j];
        }
        const real b = sum_gq / (1 / z + sum_1q);
        real step = 1, fn = f;
        bool accepted = false;
        for (int halving = 0; halving < 40; ++halving, step /= 2) {
            for (std::size_t j = 0; j < k; ++j)
                next[j] = std::clamp(alpha[j] - step * (g[j] - b) / q[j], kAlphaMin, kAlphaMax);
            fn = alpha_objective(next, mean_log_p);
            if (fn >= f) {
                accepted = true;
                break;
            }
        }
        if (!accepted) break;
        real change = 0;
        for (std::size_t j = 0; j < k; ++j) change = std::max(change, std::abs(next[j] - alpha[j]) / alpha[j]);
        alpha.swap(next);
        f = fn;
        if (change < real(1e-10)) break;
    }
}

/// Moment-matching estimate of α from weighted points.
inline std::vector<real> moment_alpha(const std::vector<Simplex>& pts, const std::vector<real>& w) {
    const std::size_t k = pts[0].size();
    std::vector<real> m1(k, 0), m2(k, 0);
    real tw = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        tw += w[i];
        for (std::size_t j = 0; j < k; ++j) {
            m1[j] += w[i] * pts[i][j];
            m2[j] += w[i] * pts[i][j] * pts[i][j];
        }
    }
    real log_s = 0;
    std::size_t used = 0;
    for (std::size_t j = 0; j < k; ++j) {
        m1[j] /= tw;
        m2[j] /= tw;
        const real var = m2[j] - m1[j] * m1[j];
        if (var > 0 && m1[j] > m2[j]) {
            log_s += std::log((m1[j] - m2[j]) / var);
            ++used;
        }
    }
    const real s = used ? std::exp(log_s / static_cast<real>(used)) : real(1e3);
    std::vector<real> alpha(k);
    for (std::size_t j = 0; j < k; ++j) alpha[j] = std::clamp(s * m1[j], kAlphaMin, kAlphaMax);
    return alpha;
}

struct EmState {
    const std::vector<Simplex>& pts;
    const std::vector<std::vector<real>>& logp;  // [N][K]
    const MixtureOptions& opt;
    real prune_threshold;
};

inline real component_loglik(const std::vector<real>& logp_i, const std::vector<real>& alpha, real norm) {
    real s = norm;
    for (std::size_t k = 0; k < alpha.size(); ++k) s += (alpha[k] - 1) * logp_i[k];
    return s;
}

inline real log_normalizer(const std::vector<real>& alpha) {
    real a0 = 0, s = 0;
    for (real a : alpha) {
        a0 += a;
        s -= std::lgamma(a);
    }
    return s + std::lgamma(a0);
}

/// E-step: fills responsibilities, returns total log-likelihood.
inline real e_step(const EmState& st, const DirichletMixture& mix, std::vector<std::vector<real>>& resp) {
    const std::size_t n = st.pts.size(), m = mix.components();
    std::vector<real> norm(m), logw(m);
    for (std::size_t c = 0; c < m; ++c) {
        norm[c] = log_normalizer(mix.alpha[c]);
        logw[c] = std::log(mix.weights[c]);
    }
    resp.assign(n, std::vector<real>(m));
    real ll = 0;
    for (std::size_t i = 0; i < n; ++i) {
        real best = -std::numeric_limits<real>::infinity();
        for (std::size_t c = 0; c < m; ++c) {
            resp[i][c] = logw[c] + component_loglik(st.logp[i], mix.alpha[c], norm[c]);
            best = std::max(best, resp[i][c]);
        }
        real s = 0;
        for (std::size_t c = 0; c < m; ++c) s += resp[i][c] = std::exp(resp[i][c] - best);
        for (std::size_t c = 0; c < m; ++c) resp[i][c] /= s;
        ll += best + std::log(s);
    }
    return ll;
}

inline void m_step(const EmState& st, DirichletMixture& mix, const std::vector<std::vector<real>>& resp) {
    const std::size_t n = st.pts.size(), k = mix.dims();
    for (std::size_t c = 0; c < mix.components(); ++c) {
        real nc = 0;
        std::vector<real> mlp(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            nc += resp[i][c];
            for (std::size_t j = 0; j < k; ++j) mlp[j] += resp[i][c] * st.logp[i][j];
        }
        mix.weights[c] = nc / static_cast<real>(n);
        if (nc <= 0) continue;
        for (auto& v : mlp) v /= nc;
        fit_alpha(mix.alpha[c], mlp, st.opt.alpha_iterations);
    }
}

inline bool prune(DirichletMixture& mix, real threshold) {
    DirichletMixture kept;
    for (std::size_t c = 0; c < mix.components(); ++c)
        if (mix.weights[c] >= threshold) {
            kept.weights.push_back(mix.weights[c]);
            kept.alpha.push_back(mix.alpha[c]);
        }
    if (kept.components() == mix.components()) return false;
    if (kept.components() == 0) {
        // keep the heaviest component rather than nothing
        const auto top = std::max_element(mix.weights.begin(), mix.weights.end()) - mix.weights.begin();
        kept.weights.push_back(1);
        kept.alpha.push_back(mix.alpha[static_cast<std::size_t>(top)]);
    }
    const real s = std::accumulate(kept.weights.begin(), kept.weights.end(), real{0});
    for (auto& w : kept.weights) w /= s;
    mix = std::move(kept);
    return true;
}

/// EM from `mix` until the mean log-likelihood settles or `budget` E-steps
/// ran; every E-step is appended to the fit history. Returns the
/// log-likelihood of the final `mix`.
inline real run_em(const EmState& st, DirichletMixture& mix, MixtureFit& fit, bool changed, std::size_t budget) {
    std::vector<std::vector<real>> resp;
    const real n = static_cast<real>(st.pts.size());
    real prev = -std::numeric_limits<real>::infinity();
    auto evaluate = [&] {
        if (st.pts.size() < mix.components())
            throw DegenerateFitError("Dirichlet mixture: " + std::to_string(st.pts.size()) + " points for " +
                                     std::to_string(mix.components()) + " components");
        const real ll = e_step(st, mix, resp);
        fit.log_likelihood.push_back(ll);
        fit.after_structure_change.push_back(changed);
        return ll;
    };
    for (std::size_t it = 1; it < budget; ++it) {
        const real ll = evaluate();
        if (!changed && std::abs(ll - prev) <= st.opt.tolerance * n) return ll;
        prev = ll;
        m_step(st, mix, resp);
        changed = prune(mix, st.prune_threshold);
        if (changed) ++fit.pruned;
    }
    return evaluate();
}

inline real bic(real ll, std::size_t m, std::size_t k, std::size_t n) {
    const real params = static_cast<real>(m * k + (m - 1));
    return -2 * ll + params * std::log(static_cast<real>(n));
}

}  // namespace detail

/// Fits the mixture. Points are clamped internally.
inline MixtureFit fit_mixture(const std::vector<Simplex>& raw_points, const MixtureOptions& opt = {}) {
    if (raw_points.size() < 2) throw DegenerateFitError("Dirichlet mixture: at least 2 points required");
    if (opt.initial_components == 0) throw ConfigError("Dirichlet mixture: initial_components must be >= 1");
    const std::size_t n = raw_points.size(), k = raw_points[0].size();
    std::vector<Simplex> pts;
    std::vector<std::vector<real>> logp;
    pts.reserve(n);
    logp.reserve(n);
    for (const auto& p : raw_points) {
        if (p.size() != k) throw ShapeError("Dirichlet mixture: points of different dimension");
        pts.push_back(clamp_to_simplex(p));
        std::vector<real> l(k);
        for (std::size_t j = 0; j < k; ++j) l[j] = std::log(pts.back()[j]);
        logp.push_back(std::move(l));
    }
    const std::size_t m0 = std::min(opt.initial_components, n);
    const real threshold = opt.prune_threshold > 0 ? opt.prune_threshold
                                                   : real{1} / (10 * static_cast<real>(opt.initial_components));
    detail::EmState st{pts, logp, opt, threshold};

    // k-means on the points for hard initial responsibilities
    Tensor x({n, k});
    for (std::size_t i = 0; i < n; ++i) std::copy(pts[i].begin(), pts[i].end(), x.data() + i * k);
    Rng rng(opt.seed);
    KMeansResult km = kmeans(x, m0, rng);
    DirichletMixture mix;
    for (std::size_t c = 0; c < m0; ++c) {
        std::vector<real> w(n, 0);
        std::size_t count = 0;
        for (std::size_t i = 0; i < n; ++i)
            if (km.assignment[i] == c) {
                w[i] = 1;
                ++count;
            }
        if (count == 0) continue;
        mix.weights.push_back(static_cast<real>(count) / static_cast<real>(n));
        mix.alpha.push_back(detail::moment_alpha(pts, w));
    }

    MixtureFit fit;
    real ll = detail::run_em(st, mix, fit, false, opt.max_iterations);
    real best_bic = detail::bic(ll, mix.components(), k, n);
    // Greedy elimination: rank each single-component removal by a short EM
    // run, finish the best one, keep it while BIC improves.
    while (opt.bic_elimination && mix.components() > 1) {
        std::optional<DirichletMixture> best;
        MixtureFit best_fit;
        real rank_bic = std::numeric_limits<real>::infinity();
        for (std::size_t drop = 0; drop < mix.components(); ++drop) {
            DirichletMixture cand;
            for (std::size_t c = 0; c < mix.components(); ++c)
                if (c != drop) {
                    cand.weights.push_back(mix.weights[c]);
                    cand.alpha.push_back(mix.alpha[c]);
                }
            const real s = std::accumulate(cand.weights.begin(), cand.weights.end(), real{0});
            for (auto& w : cand.weights) w /= s;
            MixtureFit trial;
            const real cl = detail::run_em(st, cand, trial, true, opt.trial_iterations);
            const real cb = detail::bic(cl, cand.components(), k, n);
            if (cb < rank_bic) {
                rank_bic = cb;
                best = std::move(cand);
                best_fit = std::move(trial);
            }
        }
        const bool last_changed = best_fit.pruned > 0;
        const real cl = detail::run_em(st, *best, best_fit, last_changed, opt.max_iterations);
        const real cb = detail::bic(cl, best->components(), k, n);
        if (!(cb < best_bic)) break;
        mix = std::move(*best);
        ll = cl;
        best_bic = cb;
        ++fit.eliminated;
        fit.pruned += best_fit.pruned;
        fit.log_likelihood.insert(fit.log_likelihood.end(), best_fit.log_likelihood.begin(),
                                  best_fit.log_likelihood.end());
        fit.after_structure_change.insert(fit.after_structure_change.end(), best_fit.after_structure_change.begin(),
                                          best_fit.after_structure_change.end());
    }
    fit.mixture = std::move(mix);
    fit.bic = best_bic;
    return fit;
}

enum class ScoreMethod { dirichlet, max_softmax };

inline ScoreMethod score_method_from_string(const std::string& s) {
    if (s == "dirichlet" || s == "dir") return ScoreMethod::dirichlet;
    if (s == "max" || s == "max_softmax") return ScoreMethod::max_softmax;
    throw ConfigError("unknown scoring method '" + s + "' (expected dirichlet or max)");
}

inline const char* to_string(ScoreMethod m) { return m == ScoreMethod::dirichlet ? "dirichlet" : "max"; }

/// Higher = more normal for both methods.
inline real normality_score(const Simplex& p, const DirichletMixture* mixture, ScoreMethod method) {
    if (method == ScoreMethod::max_softmax) {
        if (p.empty()) throw ShapeError("normality_score: empty vector");
        return *std::max_element(p.begin(), p.end());
    }
    if (!mixture || !mixture->fitted()) throw Error("normality_score: Dirichlet scoring needs a fitted mixture");
    return mixture->log_density(clamp_to_simplex(p));
}

inline std::vector<Simplex> rows_of(const Tensor& p) {
    std::vector<Simplex> out(p.dim(0));
    const std::size_t k = p.dim(1);
    for (std::size_t i = 0; i < out.size(); ++i) out[i].assign(p.data() + i * k, p.data() + (i + 1) * k);
    return out;
}

}  // namespace gepc
