#include "corgi/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "corgi/neighbors.hpp"

namespace corgi::metrics {

namespace {

constexpr double kPi = 3.1415926535897932384626433832795;

double sq_min_image_dist(const double* a, const double* b, int d, const Domain& domain) {
    double s = 0.0;
    for (int ax = 0; ax < d; ++ax) {
        const double dv = domain.min_image(a[ax] - b[ax], ax);
        s += dv * dv;
    }
    return s;
}

// Visit ordered neighbor pairs within `radius`; falls back to an all-pairs
// scan when the cell list's periodic half-box bound does not hold.
template <class Fn>
void for_each_neighbor(const std::vector<double>& positions, std::int64_t n, int d, double radius,
                       const Domain& domain, Fn&& fn) {
    bool cell_ok = true;
    for (int a = 0; a < d; ++a)
        if (domain.periodic[a] && !(radius < 0.5 * domain.extent(a))) cell_ok = false;
    if (cell_ok) {
        const ParticleGraph g = build_graph(positions, n, radius, domain);
        for (std::size_t e = 0; e < g.n_edges(); ++e)
            fn(g.receivers[e], g.senders[e], g.displacement.data() + e * d, g.distance[e]);
        return;
    }
    const double r2 = radius * radius;
    std::vector<double> disp(d);
    for (std::int64_t i = 0; i < n; ++i) {
        for (std::int64_t j = 0; j < n; ++j) {
            if (i == j) continue;
            double s = 0.0;
            for (int a = 0; a < d; ++a) {
                disp[a] = domain.min_image(positions[j * d + a] - positions[i * d + a], a);
                s += disp[a] * disp[a];
            }
            if (s <= r2) fn(i, j, disp.data(), std::sqrt(s));
        }
    }
}

std::vector<double> fd_velocities(const std::vector<double>& frames, std::int64_t t,
                                  std::int64_t n, int d, double dt, const Domain& domain) {
    std::vector<double> v(static_cast<std::size_t>(n) * d);
    const double* cur = frames.data() + static_cast<std::size_t>(t) * n * d;
    const double* prev = frames.data() + static_cast<std::size_t>(t - 1) * n * d;
    for (std::int64_t i = 0; i < n; ++i)
        for (int a = 0; a < d; ++a)
            v[i * d + a] = domain.min_image(cur[i * d + a] - prev[i * d + a], a) / dt;
    return v;
}

}  // namespace

double mse_n(const std::vector<double>& pred, const std::vector<double>& truth, std::int64_t n,
             std::int64_t n_particles, int d, const Domain& domain) {
    const std::size_t want = static_cast<std::size_t>(n) * n_particles * d;
    if (pred.size() != want || truth.size() != want)
        throw ValidationError("mse_n: shape mismatch (want " + std::to_string(want) +
                              " values, got " + std::to_string(pred.size()) + "/" +
                              std::to_string(truth.size()) + ")");
    if (n == 0 || n_particles == 0) throw ValidationError("mse_n: empty input");
    double acc = 0.0;
    for (std::int64_t k = 0; k < n; ++k)
        for (std::int64_t i = 0; i < n_particles; ++i)
            acc += sq_min_image_dist(pred.data() + (k * n_particles + i) * d,
                                     truth.data() + (k * n_particles + i) * d, d, domain);
    return acc / (static_cast<double>(n) * static_cast<double>(n_particles));
}

SinkhornParams default_sinkhorn_params(const Domain& domain) {
    SinkhornParams p{0.05 * domain.diagonal() * domain.diagonal(), 500, 1e-9};
    return p;
}

SinkhornResult sinkhorn(const std::vector<double>& x, const std::vector<double>& x_hat,
                        std::int64_t n_particles, int d, const Domain& domain,
                        const SinkhornParams& params) {
    if (n_particles <= 0) throw ValidationError("sinkhorn: empty point clouds");
    if (!(params.eps > 0.0)) throw ValidationError("sinkhorn: eps must be positive");
    const std::size_t n = static_cast<std::size_t>(n_particles);
    if (x.size() != n * d || x_hat.size() != n * d)
        throw ValidationError("sinkhorn: clouds must have equal particle counts");

    std::vector<double> cost(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            cost[i * n + j] =
                sq_min_image_dist(x.data() + i * d, x_hat.data() + j * d, d, domain);

    const double eps = params.eps;
    const double log_marginal = -std::log(static_cast<double>(n));  // log(1/N)
    std::vector<double> f(n, 0.0), g(n, 0.0), row(n);

    auto lse_row = [&](std::size_t i) {
        double m = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j) {
            row[j] = (g[j] - cost[i * n + j]) / eps;
            m = std::max(m, row[j]);
        }
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += std::exp(row[j] - m);
        return m + std::log(s);
    };
    auto lse_col = [&](std::size_t j) {
        double m = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < n; ++i) {
            row[i] = (f[i] - cost[i * n + j]) / eps;
            m = std::max(m, row[i]);
        }
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += std::exp(row[i] - m);
        return m + std::log(s);
    };

    const double log_uv = 2.0 * log_marginal;
    auto objective = [&](double* cost_out, double* kl_out) {
        double tc = 0.0, kl = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                const double lg = (f[i] + g[j] - cost[i * n + j]) / eps;
                const double gamma = std::exp(lg);
                if (gamma <= 0.0) continue;
                tc += gamma * cost[i * n + j];
                kl += gamma * (lg - log_uv);  // gamma * (log gamma - log(u_i v_j))
            }
        }
        if (cost_out) *cost_out = tc;
        if (kl_out) *kl_out = kl;
        return tc + eps * kl;
    };

    SinkhornResult res;
    for (int it = 1; it <= params.max_iter; ++it) {
        for (std::size_t i = 0; i < n; ++i) f[i] = eps * log_marginal - eps * lse_row(i);
        for (std::size_t j = 0; j < n; ++j) g[j] = eps * log_marginal - eps * lse_col(j);
        res.iterations = it;
        if (params.record_trace) res.objective_trace.push_back(objective(nullptr, nullptr));

        // After the g-update column marginals are exact; check rows.
        double violation = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double rs = 0.0;
            for (std::size_t j = 0; j < n; ++j)
                rs += std::exp((f[i] + g[j] - cost[i * n + j]) / eps);
            violation = std::max(violation, std::fabs(rs - 1.0 / static_cast<double>(n)));
        }
        if (violation < params.tol) {
            res.converged = true;
            break;
        }
    }

    res.value = objective(&res.transport_cost, &res.kl);
    return res;
}

double ekin_mse(const std::vector<double>& pred, const std::vector<double>& truth,
                std::int64_t n_frames, std::int64_t n_particles, int d, double dt,
                const Domain& domain, const std::vector<double>& masses) {
    const std::size_t want = static_cast<std::size_t>(n_frames) * n_particles * d;
    if (pred.size() != want || truth.size() != want)
        throw ValidationError("ekin_mse: shape mismatch");
    if (n_frames < 2) throw ValidationError("ekin_mse: need at least 2 frames");
    if (masses.size() != static_cast<std::size_t>(n_particles))
        throw ValidationError("ekin_mse: masses length mismatch");

    double acc = 0.0;
    for (std::int64_t t = 1; t < n_frames; ++t) {
        const auto vp = fd_velocities(pred, t, n_particles, d, dt, domain);
        const auto vt = fd_velocities(truth, t, n_particles, d, dt, domain);
        double ep = 0.0, et = 0.0;
        for (std::int64_t i = 0; i < n_particles; ++i) {
            double sp = 0.0, st = 0.0;
            for (int a = 0; a < d; ++a) {
                sp += vp[i * d + a] * vp[i * d + a];
                st += vt[i * d + a] * vt[i * d + a];
            }
            ep += 0.5 * masses[i] * sp;
            et += 0.5 * masses[i] * st;
        }
        acc += (ep - et) * (ep - et);
    }
    return acc / static_cast<double>(n_frames - 1);
}

double quintic_w(double r, double h, int d) {
    if (!(h > 0.0)) throw ValidationError("quintic_w: h must be positive");
    const double q = r / h;
    if (q >= 3.0) return 0.0;
    auto p5 = [](double v) { return v > 0.0 ? v * v * v * v * v : 0.0; };
    const double f = p5(3.0 - q) - 6.0 * p5(2.0 - q) + 15.0 * p5(1.0 - q);
    const double c = (d == 2) ? 7.0 / (478.0 * kPi) : 1.0 / (120.0 * kPi);
    return c * std::pow(h, -d) * f;
}

void quintic_grad_w(const double* r_vec, double h, int d, double* out) {
    double r2 = 0.0;
    for (int a = 0; a < d; ++a) r2 += r_vec[a] * r_vec[a];
    const double r = std::sqrt(r2);
    if (r <= 0.0) {
        for (int a = 0; a < d; ++a) out[a] = 0.0;
        return;
    }
    const double q = r / h;
    auto p4 = [](double v) { return v > 0.0 ? v * v * v * v : 0.0; };
    const double fp = -5.0 * (p4(3.0 - q) - 6.0 * p4(2.0 - q) + 15.0 * p4(1.0 - q));
    const double c = (d == 2) ? 7.0 / (478.0 * kPi) : 1.0 / (120.0 * kPi);
    const double dwdr = c * std::pow(h, -d) * fp / h;
    for (int a = 0; a < d; ++a) out[a] = (r_vec[a] / r) * dwdr;
}

SphScalarField sph_divergence(const std::vector<double>& positions,
                              const std::vector<double>& velocities, std::int64_t n, int d,
                              double h, const Domain& domain) {
    if (positions.size() != static_cast<std::size_t>(n) * d ||
        velocities.size() != static_cast<std::size_t>(n) * d)
        throw ValidationError("sph_divergence: shape mismatch");
    SphScalarField out;
    out.values.assign(n, 0.0);
    std::vector<double> num(n, 0.0);
    std::vector<double> den(n, quintic_w(0.0, h, d));
    std::vector<int> degree(n, 0);
    std::vector<double> grad(d), rij(d);

    for_each_neighbor(positions, n, d, 3.0 * h, domain,
                      [&](std::int64_t i, std::int64_t j, const double* disp, double dist) {
                          // disp is receiver->sender (x_j - x_i); the kernel
                          // gradient is taken along x_i - x_j.
                          for (int a = 0; a < d; ++a) rij[a] = -disp[a];
                          quintic_grad_w(rij.data(), h, d, grad.data());
                          double dot = 0.0;
                          for (int a = 0; a < d; ++a)
                              dot += (velocities[j * d + a] - velocities[i * d + a]) * grad[a];
                          num[i] += dot;
                          den[i] += quintic_w(dist, h, d);
                          ++degree[i];
                      });

    for (std::int64_t i = 0; i < n; ++i) {
        if (degree[i] == 0) {
            ++out.isolated;
            out.values[i] = 0.0;
        } else {
            out.values[i] = num[i] / den[i];
        }
    }
    return out;
}

SphVectorField sph_vorticity(const std::vector<double>& positions,
                             const std::vector<double>& velocities, std::int64_t n, int d,
                             double h, const Domain& domain) {
    if (d != 2 && d != 3) throw ValidationError("sph_vorticity: d must be 2 or 3");
    if (positions.size() != static_cast<std::size_t>(n) * d ||
        velocities.size() != static_cast<std::size_t>(n) * d)
        throw ValidationError("sph_vorticity: shape mismatch");
    SphVectorField out;
    out.values.assign(static_cast<std::size_t>(n) * 3, 0.0);
    std::vector<double> num(static_cast<std::size_t>(n) * 3, 0.0);
    std::vector<double> den(n, quintic_w(0.0, h, d));
    std::vector<int> degree(n, 0);
    std::vector<double> grad(d), rij(d);

    for_each_neighbor(
        positions, n, d, 3.0 * h, domain,
        [&](std::int64_t i, std::int64_t j, const double* disp, double dist) {
            for (int a = 0; a < d; ++a) rij[a] = -disp[a];
            quintic_grad_w(rij.data(), h, d, grad.data());
            double dv[3] = {0, 0, 0}, gw[3] = {0, 0, 0};
            for (int a = 0; a < d; ++a) {
                dv[a] = velocities[i * d + a] - velocities[j * d + a];  // x_i's minus x_j's
                gw[a] = grad[a];
            }
            num[i * 3 + 0] += dv[1] * gw[2] - dv[2] * gw[1];
            num[i * 3 + 1] += dv[2] * gw[0] - dv[0] * gw[2];
            num[i * 3 + 2] += dv[0] * gw[1] - dv[1] * gw[0];
            den[i] += quintic_w(dist, h, d);
            ++degree[i];
        });

    for (std::int64_t i = 0; i < n; ++i) {
        if (degree[i] == 0) {
            ++out.isolated;
        } else {
            for (int a = 0; a < 3; ++a) out.values[i * 3 + a] = num[i * 3 + a] / den[i];
        }
    }
    return out;
}

std::vector<double> sph_density(const std::vector<double>& positions, std::int64_t n, int d,
                                double h, const Domain& domain,
                                const std::vector<double>& masses) {
    if (masses.size() != static_cast<std::size_t>(n))
        throw ValidationError("sph_density: masses length mismatch");
    std::vector<double> rho(n);
    for (std::int64_t i = 0; i < n; ++i) rho[i] = masses[i] * quintic_w(0.0, h, d);
    for_each_neighbor(positions, n, d, 3.0 * h, domain,
                      [&](std::int64_t i, std::int64_t j, const double*, double dist) {
                          rho[i] += masses[j] * quintic_w(dist, h, d);
                      });
    return rho;
}

namespace {

template <class FieldFn>
double field_error(const std::vector<double>& pred, const std::vector<double>& truth,
                   std::int64_t n_frames, std::int64_t n_particles, int d, double dt,
                   const Domain& domain, FieldFn&& field, int field_width) {
    const std::size_t want = static_cast<std::size_t>(n_frames) * n_particles * d;
    if (pred.size() != want || truth.size() != want)
        throw ValidationError("kernel metric: trajectory shape mismatch");
    if (n_frames < 2) throw ValidationError("kernel metric: need at least 2 frames");

    double acc = 0.0;
    for (std::int64_t t = 1; t < n_frames; ++t) {
        const auto vp = fd_velocities(pred, t, n_particles, d, dt, domain);
        const auto vt = fd_velocities(truth, t, n_particles, d, dt, domain);
        const std::vector<double> xp(pred.begin() + t * n_particles * d,
                                     pred.begin() + (t + 1) * n_particles * d);
        const std::vector<double> xt(truth.begin() + t * n_particles * d,
                                     truth.begin() + (t + 1) * n_particles * d);
        const std::vector<double> fp = field(xp, vp);
        const std::vector<double> ft = field(xt, vt);
        for (std::int64_t i = 0; i < n_particles; ++i) {
            double s = 0.0;
            for (int k = 0; k < field_width; ++k) {
                const double dv = fp[i * field_width + k] - ft[i * field_width + k];
                s += dv * dv;
            }
            acc += s;
        }
    }
    return acc / (static_cast<double>(n_frames - 1) * static_cast<double>(n_particles));
}

}  // namespace

double divergence_error(const std::vector<double>& pred, const std::vector<double>& truth,
                        std::int64_t n_frames, std::int64_t n_particles, int d, double dt,
                        double h, const Domain& domain) {
    return field_error(
        pred, truth, n_frames, n_particles, d, dt, domain,
        [&](const std::vector<double>& x, const std::vector<double>& v) {
            return sph_divergence(x, v, n_particles, d, h, domain).values;
        },
        1);
}

double vorticity_error(const std::vector<double>& pred, const std::vector<double>& truth,
                       std::int64_t n_frames, std::int64_t n_particles, int d, double dt,
                       double h, const Domain& domain) {
    return field_error(
        pred, truth, n_frames, n_particles, d, dt, domain,
        [&](const std::vector<double>& x, const std::vector<double>& v) {
            return sph_vorticity(x, v, n_particles, d, h, domain).values;
        },
        3);
}

double mean_nn_distance(const std::vector<double>& positions, std::int64_t n, int d,
                        const Domain& domain) {
    if (n < 2) throw ValidationError("mean_nn_distance: need at least 2 particles");
    double acc = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (std::int64_t j = 0; j < n; ++j) {
            if (i == j) continue;
            best = std::min(best,
                            sq_min_image_dist(positions.data() + i * d, positions.data() + j * d,
                                              d, domain));
        }
        acc += std::sqrt(best);
    }
    return acc / static_cast<double>(n);
}

MetricSummary MetricReport::summarize(double RolloutMetrics::*field) const {
    MetricSummary s;
    if (rollouts.empty()) return s;
    for (const auto& r : rollouts) s.mean += r.*field;
    s.mean /= static_cast<double>(rollouts.size());
    for (const auto& r : rollouts) {
        const double dv = r.*field - s.mean;
        s.stddev += dv * dv;
    }
    s.stddev = std::sqrt(s.stddev / static_cast<double>(rollouts.size()));
    return s;
}

void MetricReport::write_csv(const std::string& path) const {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw Error("cannot open '" + path + "' for writing");
    os << "rollout,metric,value\n";
    for (const auto& r : rollouts) {
        os << r.label << ",mse," << r.mse << "\n";
        os << r.label << ",ekin_mse," << r.ekin << "\n";
        os << r.label << ",sinkhorn," << r.sinkhorn_value << "\n";
        if (r.has_kernel_metrics) {
            os << r.label << ",divergence_error," << r.divergence << "\n";
            os << r.label << ",vorticity_error," << r.vorticity << "\n";
        }
    }
    if (!os) throw Error("write failed for '" + path + "'");
}

void MetricReport::write_json(const std::string& path) const {
    nlohmann::json j;
    j["n_rollouts"] = rollouts.size();
    auto put = [&](const char* name, double RolloutMetrics::*field) {
        const MetricSummary s = summarize(field);
        j[name] = {{"mean", s.mean}, {"std", s.stddev}};
    };
    put("mse", &RolloutMetrics::mse);
    put("ekin_mse", &RolloutMetrics::ekin);
    put("sinkhorn", &RolloutMetrics::sinkhorn_value);
    bool kernel = !rollouts.empty();
    for (const auto& r : rollouts) kernel = kernel && r.has_kernel_metrics;
    if (kernel) {
        put("divergence_error", &RolloutMetrics::divergence);
        put("vorticity_error", &RolloutMetrics::vorticity);
    }
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw Error("cannot open '" + path + "' for writing");
    os << j.dump(2) << "\n";
}

}  // namespace corgi::metrics
