#pragma once
#include <vector>
#include <Eigen/Dense>

#include "s1dyn/grid.hpp"
#include "s1dyn/nonlinearity.hpp"

namespace s1dyn {

struct FlowConfig {
    double dt = 1e-3;
    enum class Scheme { EtdRk2, ImexBdf2 };
    Scheme scheme = Scheme::EtdRk2;
    double blowup_bound = 1e8;          // sup-norm abort threshold
    double tangent_growth_bound = 1e12; // sup-norm guard for linearized flows
    int store_stride = 1;               // keep every k-th step
};

// Sampled solution of u_t = u_xx + f(x,u,u_x). Immutable after construction;
// shareable across threads.
struct Trajectory {
    std::vector<double> times;
    std::vector<Field> states;
    NonlinearitySpec spec;
    FlowConfig cfg;

    const Grid& grid() const { return states.front().grid; }
    double t_begin() const { return times.front(); }
    double t_end() const { return times.back(); }
    int size() const { return static_cast<int>(times.size()); }

    // index of the last sample with times[i] <= t
    int index_below(double t) const;
    // linear interpolation between stored samples
    Field at_time(double t) const;

    // re-steps sample i at dt/2 and returns the sup-norm mismatch with
    // sample i+1 (one-step residual surrogate)
    double step_residual(int i) const;
};

Trajectory evolve(const Field& u0, const NonlinearitySpec& spec, double t_end,
                  const FlowConfig& cfg);

// S_f(tau) u0; identical to evolve's endpoint.
Field time_tau_map(const Field& u0, const NonlinearitySpec& spec, double tau,
                   const FlowConfig& cfg);

// DG_f(u0) v0 via the tangent flow along the trajectory of u0 over [0, tau].
Field time_tau_derivative(const Field& u0, const Field& v0,
                          const NonlinearitySpec& spec, double tau,
                          const FlowConfig& cfg);

// T_u(t1, t0) v0: linearized evolution along `base` (t1 >= t0). Linearization
// coefficients are interpolated linearly in time between stored samples.
Field tangent_evolve(const Trajectory& base, const Field& v0, double t0, double t1);

// T*_u(t0, t1) psi1: the adjoint evolution, integrating backward from t1 to
// t0. Implemented as the exact discrete transpose of tangent_evolve over the
// same step partition, so <T v, psi> = <v, T* psi> holds to round-off in the
// R^n dot product.
Field adjoint_evolve(const Trajectory& base, const Field& psi1, double t1, double t0);

// Dense matrix of T_u(t1, t0) on the grid (columns = images of unit vectors).
Eigen::MatrixXd tangent_matrix(const Trajectory& base, double t0, double t1);

// Apply T_u(t1, t0) to each column of a frame (n x p).
Eigen::MatrixXd tangent_frame(const Trajectory& base, const Eigen::MatrixXd& frame,
                              double t0, double t1);

// Same, but time is wrapped modulo the trajectory span (for propagating along
// a closed orbit beyond one period).
Eigen::MatrixXd tangent_matrix_periodic(const Trajectory& orbit, double t0, double t1);

} // namespace s1dyn
