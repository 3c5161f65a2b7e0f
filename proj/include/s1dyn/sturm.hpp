#pragma once
#include <string>
#include <vector>

#include "s1dyn/grid.hpp"
#include "s1dyn/semiflow.hpp"

namespace s1dyn {

struct SturmConfig {
    double rel_zero_tol = 1e-9;    // samples below rel_zero_tol*max|v| count as zero
    double degenerate_floor = 1e-13;  // max|v| below this: no sign structure
    double multiple_zero_tol = 1e-6;  // |v| and |v_x| both below: multiple zero
    int refine_samples = 64;          // sub-grid scan resolution per cell
};

// Even number of strict sign changes of v around the circle. Sign changes are
// counted on thresholded grid signs with zero runs bridged; cells whose
// samples dip suspiciously low are recounted on the local trigonometric
// interpolant so tangential touches are not mistaken for crossings.
int zero_number(const Field& v, const SturmConfig& cfg = {});

// Locations where |v| and |v_x| are simultaneously below tol after local
// refinement. Empty means all zeros are simple.
std::vector<double> multiple_zeros(const Field& v, double tol,
                                   const SturmConfig& cfg = {});

struct DropEvent {
    double time;                      // refined time of the tangency
    std::vector<double> locations;    // multiple-zero positions found there
    int z_before = 0, z_after = 0;
};

struct LapHistory {
    std::vector<double> times;
    std::vector<int> z_values;
    std::vector<bool> low_confidence;  // field near degeneracy tolerance there
    std::vector<DropEvent> drop_events;
    bool consistent = true;            // false: a drop had no bracketed multiple zero
    std::string inconsistency_note;
};

// Zero-number history of a linear-equation solution sampled by `diff`
// (a difference of two solutions, or a tangent solution). Counting at a
// sample is skipped (value carried forward) while a multiple zero is in
// progress. Each strict decrease is refined by bisection on the linearly
// interpolated field down to (sample spacing)/2^bisect_depth and must be
// matched by a multiple zero, otherwise the history is flagged inconsistent.
LapHistory track_lap(const Trajectory& diff, const SturmConfig& cfg = {},
                     int bisect_depth = 12);

// Convenience: lap history of u1(t) - u2(t) from two co-sampled trajectories.
LapHistory track_lap_difference(const Trajectory& u1, const Trajectory& u2,
                                const SturmConfig& cfg = {});

} // namespace s1dyn
