#pragma once

#include "thinflow/cutoff.hpp"

#include <array>
#include <cstdint>
#include <iosfwd>
#include <vector>

namespace thinflow {

/// Geometric description of the thin three-branch junction. In rescaled
/// variables the node is the cube (-ell0, ell0)^3 with circular ports of radius
/// h_i centered on the three positive faces; branch i is the cylinder of radius
/// eps*h_i along the positive i-axis occupying eps*ell0 < x_i < ell_i.
struct NetworkSpec {
    double ell0 = 0.3;
    std::array<double, 3> ell{1.0, 1.0, 1.0};   // branch lengths (>= 1)
    std::array<double, 3> h{0.2, 0.2, 0.2};     // branch radii (0 < h_i < ell0)
    double alpha = 0.5;    // boundary-interaction exponent: alpha < 1, not an integer
    double gamma = 0.85;   // zone-matching exponent, in (gamma_lower(), 1)
    double delta = 0.1;    // base-layer cutoff width (default min(ell)/10)
    double horizon = 1.0;  // final time T

    int alpha_floor() const;
    double gamma_lower() const;   // max(2/3, 1 - (alpha - floor)/(1 - floor))
    void validate() const;

    /// ascending cutoff in the rescaled axial variable: 0 on [0, 2*ell0], 1 beyond 3*ell0
    Cutoff chi_node() const { return Cutoff(2.0 * ell0, 3.0 * ell0); }
    /// ascending cutoff in the physical axial variable: 1 within delta of the base
    Cutoff chi_base(int i) const { return Cutoff(ell[i] - 2.0 * delta, ell[i] - delta); }
};

enum class Patch : std::int8_t {
    node_surface = 0,                    // walls of the node region
    lateral_1, lateral_2, lateral_3,     // cylinder / stub side walls
    base_1, base_2, base_3,              // Dirichlet end disks (thin junction)
    cap_1, cap_2, cap_3,                 // truncation caps (rescaled node domain)
};

const char* patch_name(Patch p);
inline Patch lateral_patch(int i) { return Patch(int(Patch::lateral_1) + i); }
inline Patch base_patch(int i) { return Patch(int(Patch::base_1) + i); }
inline Patch cap_patch(int i) { return Patch(int(Patch::cap_1) + i); }

/// Axis-aligned voxel discretization of either the physical junction or the
/// rescaled node-with-stubs domain. Cells are cubes of side `spacing` on the
/// lattice centered at the node; a cell belongs to the domain iff its center
/// does. Inclusion tests run in exact index arithmetic so faces of the cube
/// part land on lattice planes with no rounding ambiguity.
struct VoxelMesh {
    double spacing = 0.0;
    int n_half = 0;                         // cube half-width in cells
    std::array<int, 3> n_axial{};           // branch lengths in cells (beyond the cube)
    double cube_half = 0.0;                 // = n_half * spacing
    std::array<double, 3> branch_end{};     // axial coordinate of each end plane
    std::array<double, 3> branch_radius{};  // physical branch radii

    std::array<int, 3> lat_lo{}, lat_hi{};      // lattice cell-index bounds
    std::vector<std::int32_t> lut;              // lattice -> cell id, -1 outside
    std::vector<std::array<std::int16_t, 3>> cell;   // cell id -> lattice coords
    std::vector<std::array<std::int32_t, 6>> nbr;    // >= 0: neighbor id; < 0: encoded patch
    std::vector<std::uint8_t> region;           // 0 = node cube, 1..3 = branch i+1

    int n_cells() const { return static_cast<int>(cell.size()); }
    std::array<double, 3> center(int c) const;
    double volume() const { return n_cells() * spacing * spacing * spacing; }
    double cell_volume() const { return spacing * spacing * spacing; }

    /// cell containing x (centers convention), or -1 if outside the domain
    int locate(const std::array<double, 3>& x) const;

    /// axial slice index of a branch cell, counted from the port plane
    int branch_slice(int c) const;

    int count_faces(Patch p) const;
    double patch_area(Patch p) const { return count_faces(p) * spacing * spacing; }

    void dump_ascii(std::ostream& os) const;

    // neighbor table encoding for boundary faces
    static std::int32_t encode_patch(Patch p) { return -1 - static_cast<std::int32_t>(p); }
    static Patch decode_patch(std::int32_t v) { return Patch(-1 - v); }

    // directions: 0:-x 1:+x 2:-y 3:+y 4:-z 5:+z
    static int dir_axis(int d) { return d >> 1; }
    static int dir_sign(int d) { return (d & 1) ? +1 : -1; }
};

/// Voxelize the physical junction Omega_eps. Requires spacing <= eps*min(h)/4.
VoxelMesh build_thin_junction(const NetworkSpec& spec, double eps, double target_spacing);

/// Voxelize the rescaled node domain: cube plus stubs truncated at trunc_len
/// (measured from the node center along each axis). Requires trunc_len >= 5*ell0
/// and spacing <= min(h)/4.
VoxelMesh build_rescaled_node(const NetworkSpec& spec, double trunc_len, double target_spacing);

/// Closed-form volume of Omega_eps (cube plus three cylinders), for oracles.
double junction_volume(const NetworkSpec& spec, double eps);

} // namespace thinflow
