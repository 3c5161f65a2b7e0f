#pragma once
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "s1dyn/critical.hpp"

namespace s1dyn {

struct ConnectionConfig {
    double capture_radius = 1e-3;   // sup-norm
    double dwell_min = 5.0;         // time units inside the ball
    double rate_tol = 1e-3;         // relative on rates >= 0.1, absolute below
    double fit_lo = 1e-9, fit_hi = 1e-2;  // linear-regime norm band for fits
    int fit_min_samples = 20;
    double inj_tol = 1e-4;          // (u, u_x) collision tolerance
    double sigma_low = 1e-8, sigma_high = 1e-4;  // singular-value bands
    double hyperbolic_margin = 1e-6;
};

// A critical element a trajectory can connect to.
struct Element {
    std::string name;
    std::variant<EquilibriumRecord, PeriodicOrbitRecord> record;

    bool is_equilibrium() const { return record.index() == 0; }
    const EquilibriumRecord& equilibrium() const { return std::get<0>(record); }
    const PeriodicOrbitRecord& orbit() const { return std::get<1>(record); }
    int morse_index() const;
    double hyperbolicity_margin() const;
    // sup-norm distance from u to the element (to the set, for orbits)
    double distance(const Field& u) const;
};

struct Capture {
    int element = -1;
    double entry_time = 0.0;   // first time the tail stays inside the ball
    double phase = 0.0;        // asymptotic phase a for orbits
};

enum class FitCase { SimpleReal, DoubleRealSemisimple, DoubleRealJordan, ComplexPair };

struct AsymptoticFit {
    double rate = 0.0;               // Re lambda_i, or ln|mu_i|/p for orbits
    FitCase fit_case = FitCase::SimpleReal;
    int matched_eigenvalue_index = -1;
    double residual = 0.0;           // rms of the log-linear fit
    bool matched = false;
};

struct ClauseResult {
    std::string name;
    bool applicable = true;
    bool pass = true;
    std::string measured;
};

struct InequalityVerdict {
    bool pass = true;
    std::vector<ClauseResult> clauses;
};

struct InjectivityVerdict {
    bool hypothesis_met = false;  // both endpoints equilibria of equal even index
    bool pass = true;
    double min_endpoint_distance = 0.0;  // clause 1 margin
    struct Collision {
        double x, t_a, t_b, distance;
    };
    std::vector<Collision> near_collisions;
};

struct TransversalityDimension {
    bool pass = false;
    bool indeterminate = false;
    int intersection_dim = 0;
    int bound = 0;
    std::vector<double> singular_values;
};

struct ConnectionRecord {
    Trajectory trajectory;
    int source = -1, target = -1;    // indices into the element list
    Capture capture;
    AsymptoticFit source_fit, target_fit;
    LapHistory lap_to_target;        // z(u(t) - target profile)
    LapHistory lap_to_source;        // z(u(t) - source profile)
    InequalityVerdict inequalities;
    std::optional<TransversalityDimension> transversality;
};

// Evolve u0 = e + eps*direction up to t_max or until captured by an element.
Trajectory shoot_unstable(const EquilibriumRecord& e, const Field& direction,
                          double eps, const NonlinearitySpec& spec, double t_max,
                          const FlowConfig& flow,
                          const std::vector<Element>& elements = {},
                          const ConnectionConfig& cfg = {});

// First element whose capture ball contains the trajectory tail for at least
// dwell_min; returns the asymptotic phase for periodic orbits.
Capture detect_capture(const Trajectory& traj, const std::vector<Element>& elements,
                       const ConnectionConfig& cfg = {});

// Least-squares exponential fit of the approach (side == target) or the
// escape (side == source) against the matched element's trusted spectrum.
enum class FitSide { Source, Target };
AsymptoticFit asymptotic_fit(const Trajectory& traj, const Element& element,
                             FitSide side, const ConnectionConfig& cfg = {},
                             double phase = 0.0);

// Every applicable zero-number/Morse-index inequality for the endpoint pair.
InequalityVerdict verify_connection_inequalities(const ConnectionRecord& conn,
                                                 const std::vector<Element>& elements,
                                                 const ConnectionConfig& cfg = {});

InjectivityVerdict injectivity_check(const ConnectionRecord& conn,
                                     const std::vector<Element>& elements,
                                     const ConnectionConfig& cfg = {});

// Rank of the evolved unstable frame against the target's stable splitting.
TransversalityDimension transversality_dimension_check(
    const ConnectionRecord& conn, const std::vector<Element>& elements,
    const ConnectionConfig& cfg = {});

// SVD band logic shared with the dichotomy module: how much of `frame` lies
// inside the kernel of adjoint_unstable^T, with the ambiguity band applied.
TransversalityDimension intersection_rank(const Eigen::MatrixXd& frame,
                                          const Eigen::MatrixXd& adjoint_unstable,
                                          int bound, const ConnectionConfig& cfg = {});

// Assemble a full record for a captured shot.
ConnectionRecord analyze_connection(Trajectory traj, int source_index,
                                    const std::vector<Element>& elements,
                                    const ConnectionConfig& cfg = {});

// --- connection graph -------------------------------------------------------

struct GraphEdge {
    int source = -1, target = -1;
    int i_source = 0, i_target = 0;
    std::string rule;    // which index rule applies
    bool rule_ok = true;
};

struct GraphReport {
    std::vector<GraphEdge> edges;
    bool acyclic = true;
    std::vector<int> cycle;          // one witness cycle if any
    std::vector<int> longest_chain;  // node indices of the longest simple path
    bool all_edges_ok = true;
    std::vector<std::string> excluded_elements;  // non-hyperbolic, with reason
};

GraphReport connection_graph(const std::vector<Element>& elements,
                             const std::vector<ConnectionRecord>& connections,
                             const ConnectionConfig& cfg = {});

} // namespace s1dyn
