#pragma once
#include <complex>
#include <optional>
#include <string>
#include <vector>
#include <Eigen/Dense>

#include "s1dyn/semiflow.hpp"
#include "s1dyn/sturm.hpp"

namespace s1dyn {

enum class PairKind { SimpleReal, DoubleRealSemisimple, DoubleRealJordan, ComplexPair };

struct PairBlock {
    int first_index = 0;  // position of lambda_{2j-1} in the ordered list
    PairKind kind = PairKind::SimpleReal;
};

struct SpectrumReport {
    // equilibria: ordered by non-increasing real part;
    // period maps: ordered by non-increasing modulus
    std::vector<std::complex<double>> eigenvalues;
    std::vector<Field> eigenfunctions_re;
    std::vector<Field> eigenfunctions_im;
    int morse_index = 0;
    double hyperbolicity_margin = 0.0;
    std::vector<PairBlock> pairing;
    int trusted_count = 0;       // leading eigenvalues within the resolved band
    bool floquet = false;        // ordering/index conventions for period maps
    int trivial_index = -1;      // position of the trivial Floquet eigenvalue
};

struct CriticalConfig {
    double newton_tol = 1e-10;
    int max_iter = 50;
    double orbit_tol = 1e-6;
    double floquet_tol = 1e-5;
    double trivial_alignment = 0.99;   // eigenvector cosine with gamma_t(0)
    double jordan_value_tol = 1e-7;    // eigenvalue distance for double pairs
    double jordan_angle_tol = 1e-4;    // eigenvector angle below: algebraically double
};

struct EquilibriumRecord {
    Field profile;
    double residual = 0.0;        // sup-norm of u_xx + f(x,u,u_x)
    SpectrumReport spectrum;
};

struct PeriodicOrbitRecord {
    Trajectory snapshots;         // one period, gamma(0) ... gamma(p)
    double period = 0.0;
    SpectrumReport spectrum;      // Floquet
    double closure_error = 0.0;   // sup-norm of u(p) - u(0)
    Field gamma_dot0;             // time derivative at phase 0
};

// Dense matrix of the linearized operator L_u = d^2/dx^2 + D_u f + D_p f d/dx.
Eigen::MatrixXd linearized_operator(const NonlinearitySpec& spec, const Field& u);

// Newton iteration on u_xx + f(x, u, u_x) = 0 with spectral Jacobian.
EquilibriumRecord find_equilibrium(const Field& guess, const NonlinearitySpec& spec,
                                   const CriticalConfig& cfg = {});

// Spectrum of L_e with Sturm-Liouville ordering, pairing blocks, Morse index.
SpectrumReport analyze_operator(const Eigen::MatrixXd& L, const Grid& g,
                                const CriticalConfig& cfg = {});

struct PairingClause {
    std::string name;
    bool pass = false;
    std::string detail;
};
struct PairingVerdict {
    bool pass = true;
    bool resolution_sufficient = true;
    std::vector<PairingClause> clauses;
};

// Verifies: (a) the leading eigenvalue is real, simple, with nowhere-zero
// eigenfunction; (b) strict real-part separation between consecutive pairs;
// (c) every sampled real member of pair j has exactly 2j simple zeros.
PairingVerdict verify_pairing(const SpectrumReport& spectrum, const CriticalConfig& cfg = {});

// Rotating-wave seed: solve the drift-free profile equation and rotate it.
struct RotatingWaveSeed {
    Field profile_guess;
};

PeriodicOrbitRecord find_periodic_orbit(const RotatingWaveSeed& seed,
                                        const NonlinearitySpec& spec,
                                        const FlowConfig& flow,
                                        const CriticalConfig& cfg = {});

// General seed: single shooting on (u0, p) with phase condition
// <du/dt(0), delta u0> = 0.
PeriodicOrbitRecord find_periodic_orbit(const Trajectory& loop_seed,
                                        double period_guess,
                                        const NonlinearitySpec& spec,
                                        const FlowConfig& flow,
                                        const CriticalConfig& cfg = {});

// Matrix of the period map Pi(p, 0) along the orbit.
Eigen::MatrixXd period_map(const PeriodicOrbitRecord& orbit);

// Floquet spectrum of an assembled period map; the trivial eigenvalue is
// identified by eigenvector alignment with gamma_t(0) and excluded from the
// Morse count and hyperbolicity margin.
SpectrumReport floquet_analysis(const Eigen::MatrixXd& Pi, const Grid& g,
                                const Field& gamma_dot0,
                                const CriticalConfig& cfg = {});

} // namespace s1dyn
