#pragma once
#include <optional>
#include <vector>
#include <Eigen/Dense>

#include "s1dyn/connections.hpp"
#include "s1dyn/semiflow.hpp"

namespace s1dyn {

// Family of one-step operators T_n : index n -> n+1, n in [n_lo, n_hi).
// Synthetic mode stores dense matrices directly; PDE mode compresses tangent
// steps along a trajectory to the trusted Fourier band.
struct EvolutionFamily {
    int n_lo = 0, n_hi = 0;
    std::vector<Eigen::MatrixXd> steps;

    int dim() const { return steps.empty() ? 0 : static_cast<int>(steps[0].rows()); }
    int length() const { return n_hi - n_lo; }
    const Eigen::MatrixXd& step(int n) const { return steps.at(n - n_lo); }

    static EvolutionFamily constant(const Eigen::MatrixXd& T, int n_lo, int n_hi);
};

// Band-compressed linearized steps along `traj`: step n is the tangent
// propagator over [t_center + n tau, t_center + (n+1) tau] restricted to
// wavenumbers <= n/3 (orthonormal trig basis).
EvolutionFamily pde_family(const Trajectory& traj, double t_center, double tau,
                           int n_lo, int n_hi);

struct DichotomyConfig {
    double gap_tol = 0.02;        // averaged exponents this close to 0: no gap
    double sigma_low = 1e-8, sigma_high = 1e-4;
    int max_burn = 8;             // sweep convergence margin at the window ends
    double condition_guard = 1e8; // extend the burn while W^T U is worse than this
};

struct DichotomyReport {
    int rank = 0;
    double exponent = 0.0;              // beta
    double bound = 0.0;                 // M
    double rho = 1.0;                   // shift center (1 = ordinary dichotomy)
    std::optional<std::pair<double, double>> gap;  // [lambda1, lambda2] if shifted
    int window_lo = 0, window_hi = 0;   // reported (converged) window
    std::vector<Eigen::MatrixXd> projections;      // P(n), n in reported window

    // canonical boundary subspaces (orthonormal columns):
    Eigen::MatrixXd unstable_at_hi;     // U(n_hi): range of P at the right end
    Eigen::MatrixXd adjoint_unstable_at_lo;  // W(n_lo): range of P* at the left end

    // verification diagnostics over the reported window
    double max_projection_defect = 0.0;   // ||P^2 - P||
    double max_commutation_defect = 0.0;  // ||T P - P T|| / ||T||
    bool clauses_ok = false;

    const Eigen::MatrixXd& P(int n) const { return projections.at(n - window_lo); }
};

DichotomyReport detect_dichotomy(const EvolutionFamily& fam,
                                 std::optional<double> shift = {},
                                 const DichotomyConfig& cfg = {});

// Unique bounded solution of Y(n+1) - T_n Y(n) = F(n) through the Green
// function; tails truncated at the window with a geometric error bound.
struct GreenSolution {
    int n_lo = 0;                       // solution window (= report window)
    std::vector<Eigen::VectorXd> Y;
    std::vector<double> tail_bound;     // per-sample truncation bound
    const Eigen::VectorXd& at(int n) const { return Y.at(n - n_lo); }
};

GreenSolution green_solve(const EvolutionFamily& fam, const DichotomyReport& report,
                          const std::vector<Eigen::VectorXd>& F);

// Fredholm data of LY(n) = Y(n+1) - T_n Y(n) from half-window dichotomies
// (minus window ends at 0, plus window starts at 0).
struct FredholmReport {
    int rank_minus = 0, rank_plus = 0;
    int index = 0;
    int kernel_dim = 0, cokernel_dim = 0;
    bool indeterminate = false;
    std::vector<double> kernel_sigmas, cokernel_sigmas;
    std::vector<Eigen::VectorXd> kernel_at_zero;    // x(0) for bounded solutions
    std::vector<Eigen::VectorXd> cokernel_at_zero;  // psi(0) for bounded adjoints
};

FredholmReport fredholm_index(const EvolutionFamily& fam,
                              const DichotomyReport& report_minus,
                              const DichotomyReport& report_plus,
                              const DichotomyConfig& cfg = {});

// Bounded adjoint sequences psi(n) = T*(n,0) psi0 materialized on the window.
struct AdjointSequence {
    Eigen::VectorXd psi0;
    int n_lo = 0;
    std::vector<Eigen::VectorXd> values;
};

std::vector<AdjointSequence> bounded_adjoint_solutions(const EvolutionFamily& fam,
                                                       const DichotomyReport& report_minus,
                                                       const DichotomyReport& report_plus,
                                                       const DichotomyConfig& cfg = {});

// Kernel sequences of L (bounded homogeneous solutions), for tests/diagnostics.
std::vector<AdjointSequence> bounded_kernel_solutions(const EvolutionFamily& fam,
                                                      const DichotomyReport& report_minus,
                                                      const DichotomyReport& report_plus,
                                                      const DichotomyConfig& cfg = {});

// --- Melnikov pairing --------------------------------------------------------

// Continuous-time adjoint solution sampled along a trajectory.
struct AdjointPath {
    std::vector<double> times;
    std::vector<Field> psi;
};

// Reconstruct psi(t) between integer steps by the adjoint flow along traj:
// psi(sigma) = T*(sigma, (n+1)tau) psi((n+1)tau).
AdjointPath adjoint_path_from_sequence(const Trajectory& traj, double t_center,
                                       double tau, const std::vector<Field>& psi_steps,
                                       int n_lo, int substeps);

struct MelnikovResult {
    double value = 0.0;
    double quadrature_error = 0.0;  // Richardson estimate
    double tail_bound = 0.0;        // truncated-tail contribution bound
    double total_error() const { return quadrature_error + tail_bound; }
};

// integral of <psi(t), g(x, u, u_x)>_{L2} dt along the trajectory window
MelnikovResult melnikov_integral(const Trajectory& traj, const AdjointPath& psi,
                                 const Term& bump);

struct BreakingBump {
    Term bump;
    MelnikovResult melnikov;
    double x0 = 0.0, t0 = 0.0;
    int shrink_steps = 0;
};

// Bump centered where |psi| peaks, with widths shrunk until its support meets
// the curve t -> (u, u_x)(x0, t) only near t0 and the Melnikov value is
// sign-certain (|value| > 3 * error).
BreakingBump construct_breaking_bump(const Trajectory& traj, const AdjointPath& psi,
                                     const ConnectionConfig& conn_cfg = {});

} // namespace s1dyn
