#pragma once
#include <stdexcept>
#include <string>

namespace s1dyn {

// Rejected or malformed input (bad grid size, non-finite field, unparsable file).
struct InputError : std::runtime_error {
    explicit InputError(const std::string& msg) : std::runtime_error(msg) {}
};

// Sup-norm escaped the configured bound during time integration.
struct BlowupError : std::runtime_error {
    double time;
    double sup_norm;
    BlowupError(double t, double sup)
        : std::runtime_error("solution exceeded blowup bound at t=" + std::to_string(t)),
          time(t), sup_norm(sup) {}
};

// An iterative solver (Newton, shooting) failed to reach its tolerance.
struct ConvergenceError : std::runtime_error {
    double last_residual;
    ConvergenceError(const std::string& msg, double res)
        : std::runtime_error(msg), last_residual(res) {}
};

// Field has no meaningful sign structure (max|v| below degeneracy tolerance).
struct DegenerateFieldError : std::runtime_error {
    explicit DegenerateFieldError(const std::string& msg) : std::runtime_error(msg) {}
};

// Subspace iteration found spectrum on the reference circle.
struct NoGapError : std::runtime_error {
    explicit NoGapError(const std::string& msg) : std::runtime_error(msg) {}
};

// A singular value fell inside the ambiguity band; verdict would be a guess.
struct IndeterminateError : std::runtime_error {
    double singular_value;
    IndeterminateError(const std::string& msg, double sv)
        : std::runtime_error(msg), singular_value(sv) {}
};

// Trajectory never settled inside any element's capture ball.
struct NoCaptureError : std::runtime_error {
    explicit NoCaptureError(const std::string& msg) : std::runtime_error(msg) {}
};

// Asymptotic-fit window shorter than the required sample count.
struct WindowError : std::runtime_error {
    explicit WindowError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace s1dyn
