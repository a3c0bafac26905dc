#pragma once

// Rollout evaluation suite: position MSE, entropic optimal transport,
// kinetic-energy MSE, and quintic-spline SPH divergence / vorticity /
// density diagnostics.

#include <cstdint>
#include <string>
#include <vector>

#include "corgi/common.hpp"

namespace corgi::metrics {

// (1/(N n)) sum over frames and particles of the squared minimum-image
// position error.
double mse_n(const std::vector<double>& pred, const std::vector<double>& truth, std::int64_t n,
             std::int64_t n_particles, int d, const Domain& domain);

struct SinkhornParams {
    double eps;
    int max_iter = 500;
    double tol = 1e-9;  // max marginal violation
    bool record_trace = false;
};

// Entropy-regularized OT defaults: eps = 0.05 * diag^2 unless overridden.
SinkhornParams default_sinkhorn_params(const Domain& domain);

struct SinkhornResult {
    double value = 0.0;           // <Gamma,C> + eps * KL(Gamma || u v^T)
    double transport_cost = 0.0;  // <Gamma,C>
    double kl = 0.0;
    int iterations = 0;
    bool converged = false;
    std::vector<double> objective_trace;  // per-iteration objective when recorded
};

// Squared minimum-image pairwise costs, uniform 1/N marginals, log-domain
// Sinkhorn-Knopp. Non-convergence within max_iter is flagged, not fatal.
SinkhornResult sinkhorn(const std::vector<double>& x, const std::vector<double>& x_hat,
                        std::int64_t n_particles, int d, const Domain& domain,
                        const SinkhornParams& params);

// MSE between the kinetic-energy time series of two equally shaped position
// sequences; velocities are minimum-image finite differences, so a T-frame
// window yields T-1 energy samples.
double ekin_mse(const std::vector<double>& pred, const std::vector<double>& truth,
                std::int64_t n_frames, std::int64_t n_particles, int d, double dt,
                const Domain& domain, const std::vector<double>& masses);

// Quintic spline (support 3h): W(r) = C_d h^-d [(3-q)+^5 - 6(2-q)+^5 + 15(1-q)+^5].
double quintic_w(double r, double h, int d);
// Directional gradient dW/d|r| * r_vec/|r_vec|; zero at the origin.
void quintic_grad_w(const double* r_vec, double h, int d, double* out);

struct SphScalarField {
    std::vector<double> values;  // [N]
    int isolated = 0;            // particles with no neighbors in 3h
};
struct SphVectorField {
    std::vector<double> values;  // [N][3]
    int isolated = 0;
};

// Shepard-normalized velocity divergence; the denominator includes the
// self-term W(0).
SphScalarField sph_divergence(const std::vector<double>& positions,
                              const std::vector<double>& velocities, std::int64_t n, int d,
                              double h, const Domain& domain);

// Signed curl estimate; 2-D fields are embedded in 3-D with zero third
// component, so rigid rotation at rate w about z reports ~(0,0,2w).
SphVectorField sph_vorticity(const std::vector<double>& positions,
                             const std::vector<double>& velocities, std::int64_t n, int d,
                             double h, const Domain& domain);

// rho_i = sum_j m_j W(|x_i - x_j|), including the self-term.
std::vector<double> sph_density(const std::vector<double>& positions, std::int64_t n, int d,
                                double h, const Domain& domain,
                                const std::vector<double>& masses);

// MSE over frames and particles of the squared difference between the two
// trajectories' per-particle divergence (scalar) / vorticity (3-vector).
double divergence_error(const std::vector<double>& pred, const std::vector<double>& truth,
                        std::int64_t n_frames, std::int64_t n_particles, int d, double dt,
                        double h, const Domain& domain);
double vorticity_error(const std::vector<double>& pred, const std::vector<double>& truth,
                       std::int64_t n_frames, std::int64_t n_particles, int d, double dt,
                       double h, const Domain& domain);

// Mean nearest-neighbor distance; the default smoothing length.
double mean_nn_distance(const std::vector<double>& positions, std::int64_t n, int d,
                        const Domain& domain);

struct RolloutMetrics {
    std::string label;
    double mse = 0.0;
    double ekin = 0.0;
    double sinkhorn_value = 0.0;
    bool sinkhorn_converged = true;
    bool has_kernel_metrics = false;
    double divergence = 0.0;
    double vorticity = 0.0;
};

struct MetricSummary {
    double mean = 0.0;
    double stddev = 0.0;
};

struct MetricReport {
    std::vector<RolloutMetrics> rollouts;

    MetricSummary summarize(double RolloutMetrics::*field) const;
    void write_csv(const std::string& path) const;
    void write_json(const std::string& path) const;
};

}  // namespace corgi::metrics
