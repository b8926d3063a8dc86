#include "thinflow/geometry.hpp"
#include "thinflow/errors.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>

namespace thinflow {

int NetworkSpec::alpha_floor() const { return static_cast<int>(std::floor(alpha)); }

double NetworkSpec::gamma_lower() const {
    const double fl = alpha_floor();
    return std::max(2.0 / 3.0, 1.0 - (alpha - fl) / (1.0 - fl));
}

void NetworkSpec::validate() const {
    if (!(ell0 > 0.0) || !(ell0 < 1.0 / 3.0))
        fail(errkind::GeometryOverlap, "ell0 must lie in (0, 1/3)");
    for (int i = 0; i < 3; ++i) {
        if (!(ell[i] >= 1.0))
            fail(errkind::GeometryOverlap, "branch length ell[" + std::to_string(i) + "] must be >= 1");
        if (!(h[i] > 0.0) || !(h[i] < ell0))
            fail(errkind::GeometryOverlap, "branch radius h[" + std::to_string(i) + "] must lie in (0, ell0)");
    }
    if (!(delta > 0.0) || !(2.0 * delta < *std::min_element(ell.begin(), ell.end())))
        fail(errkind::GeometryOverlap, "delta must satisfy 0 < 2*delta < min(ell)");
    if (!(horizon > 0.0))
        fail(errkind::GeometryOverlap, "time horizon must be positive");
    if (!(alpha < 1.0) || alpha == std::floor(alpha))
        fail(errkind::BadOrderIndex, "alpha must be non-integer and < 1");
    if (!(gamma > gamma_lower()) || !(gamma < 1.0)) {
        std::ostringstream os;
        os << "gamma = " << gamma << " outside admissible window (" << gamma_lower() << ", 1)";
        fail(errkind::GammaOutOfWindow, os.str());
    }
}

const char* patch_name(Patch p) {
    switch (p) {
        case Patch::node_surface: return "node_surface";
        case Patch::lateral_1: return "lateral_1";
        case Patch::lateral_2: return "lateral_2";
        case Patch::lateral_3: return "lateral_3";
        case Patch::base_1: return "base_1";
        case Patch::base_2: return "base_2";
        case Patch::base_3: return "base_3";
        case Patch::cap_1: return "cap_1";
        case Patch::cap_2: return "cap_2";
        case Patch::cap_3: return "cap_3";
    }
    return "?";
}

std::array<double, 3> VoxelMesh::center(int c) const {
    const auto& k = cell[c];
    return {(k[0] + 0.5) * spacing, (k[1] + 0.5) * spacing, (k[2] + 0.5) * spacing};
}

int VoxelMesh::locate(const std::array<double, 3>& x) const {
    std::array<int, 3> k;
    for (int a = 0; a < 3; ++a) {
        k[a] = static_cast<int>(std::floor(x[a] / spacing));
        if (k[a] < lat_lo[a] || k[a] >= lat_hi[a]) return -1;
    }
    const int nx = lat_hi[0] - lat_lo[0], ny = lat_hi[1] - lat_lo[1];
    const std::size_t idx =
        static_cast<std::size_t>((k[2] - lat_lo[2]) * ny + (k[1] - lat_lo[1])) * nx +
        (k[0] - lat_lo[0]);
    return lut[idx];
}

int VoxelMesh::branch_slice(int c) const {
    const int r = region[c];
    if (r == 0) return -1;
    return cell[c][r - 1] - n_half;
}

int VoxelMesh::count_faces(Patch p) const {
    const std::int32_t code = encode_patch(p);
    int n = 0;
    for (const auto& row : nbr)
        for (int d = 0; d < 6; ++d)
            if (row[d] == code) ++n;
    return n;
}

double junction_volume(const NetworkSpec& spec, double eps) {
    const double a = eps * spec.ell0;
    double v = 8.0 * a * a * a;
    for (int i = 0; i < 3; ++i) {
        const double r = eps * spec.h[i];
        v += 3.14159265358979323846 * r * r * (spec.ell[i] - a);
    }
    return v;
}

namespace {

struct BuildParams {
    double spacing;
    int n_half;
    std::array<int, 3> n_axial;
    std::array<double, 3> radius;   // physical branch radii
    bool caps;                      // end patch is a truncation cap (else Dirichlet base)
};

VoxelMesh build_core(const BuildParams& P) {
    VoxelMesh m;
    m.spacing = P.spacing;
    m.n_half = P.n_half;
    m.n_axial = P.n_axial;
    m.cube_half = P.n_half * P.spacing;
    m.branch_radius = P.radius;
    for (int i = 0; i < 3; ++i) m.branch_end[i] = (P.n_half + P.n_axial[i]) * P.spacing;

    for (int a = 0; a < 3; ++a) {
        m.lat_lo[a] = -P.n_half;
        m.lat_hi[a] = P.n_half + P.n_axial[a];
    }
    const int nx = m.lat_hi[0] - m.lat_lo[0];
    const int ny = m.lat_hi[1] - m.lat_lo[1];
    const int nz = m.lat_hi[2] - m.lat_lo[2];

    // squared staircase radii in index units
    std::array<double, 3> r2;
    for (int i = 0; i < 3; ++i) {
        const double ri = P.radius[i] / P.spacing;
        r2[i] = ri * ri;
    }

    auto classify = [&](int kx, int ky, int kz) -> int {
        // region of the cell with lattice coords k, or -1 if outside
        const std::array<int, 3> k{kx, ky, kz};
        bool cube = true;
        for (int a = 0; a < 3; ++a)
            if (k[a] < -P.n_half || k[a] >= P.n_half) { cube = false; break; }
        if (cube) return 0;
        for (int i = 0; i < 3; ++i) {
            if (k[i] < P.n_half || k[i] >= P.n_half + P.n_axial[i]) continue;
            const int u = k[(i + 1) % 3], v = k[(i + 2) % 3];
            const double du = u + 0.5, dv = v + 0.5;
            if (du * du + dv * dv < r2[i]) return i + 1;
        }
        return -1;
    };

    m.lut.assign(static_cast<std::size_t>(nx) * ny * nz, -1);
    auto lut_at = [&](int kx, int ky, int kz) -> std::int32_t& {
        return m.lut[static_cast<std::size_t>((kz - m.lat_lo[2]) * ny + (ky - m.lat_lo[1])) * nx +
                     (kx - m.lat_lo[0])];
    };

    // first pass: enumerate cells
    for (int kz = m.lat_lo[2]; kz < m.lat_hi[2]; ++kz)
        for (int ky = m.lat_lo[1]; ky < m.lat_hi[1]; ++ky)
            for (int kx = m.lat_lo[0]; kx < m.lat_hi[0]; ++kx) {
                const int reg = classify(kx, ky, kz);
                if (reg < 0) continue;
                lut_at(kx, ky, kz) = m.n_cells();
                m.cell.push_back({static_cast<std::int16_t>(kx), static_cast<std::int16_t>(ky),
                                  static_cast<std::int16_t>(kz)});
                m.region.push_back(static_cast<std::uint8_t>(reg));
            }

    // second pass: neighbors and boundary patches
    static const int step[6][3] = {{-1, 0, 0}, {1, 0, 0}, {0, -1, 0},
                                   {0, 1, 0},  {0, 0, -1}, {0, 0, 1}};
    m.nbr.resize(m.cell.size());
    for (int c = 0; c < m.n_cells(); ++c) {
        const auto& k = m.cell[c];
        const int reg = m.region[c];
        for (int d = 0; d < 6; ++d) {
            const int kx = k[0] + step[d][0], ky = k[1] + step[d][1], kz = k[2] + step[d][2];
            std::int32_t nb = -1;
            if (kx >= m.lat_lo[0] && kx < m.lat_hi[0] && ky >= m.lat_lo[1] && ky < m.lat_hi[1] &&
                kz >= m.lat_lo[2] && kz < m.lat_hi[2])
                nb = lut_at(kx, ky, kz);
            if (nb >= 0) {
                m.nbr[c][d] = nb;
                continue;
            }
            Patch p;
            if (reg == 0) {
                p = Patch::node_surface;
            } else {
                const int i = reg - 1;
                const int axis = VoxelMesh::dir_axis(d);
                if (axis == i && VoxelMesh::dir_sign(d) > 0 && k[i] == P.n_half + P.n_axial[i] - 1)
                    p = P.caps ? cap_patch(i) : base_patch(i);
                else
                    p = lateral_patch(i);
            }
            m.nbr[c][d] = VoxelMesh::encode_patch(p);
        }
    }
    return m;
}

BuildParams snap_params(const NetworkSpec& spec, double scale, const std::array<double, 3>& len,
                        double target_spacing, bool caps) {
    const double a = scale * spec.ell0;
    const double hmin = scale * *std::min_element(spec.h.begin(), spec.h.end());
    if (!(target_spacing > 0.0) || target_spacing > hmin / 4.0 * (1.0 + 1e-12)) {
        std::ostringstream os;
        os << "spacing " << target_spacing << " exceeds min radius / 4 = " << hmin / 4.0;
        fail(errkind::SpacingTooCoarse, os.str());
    }
    BuildParams P;
    P.caps = caps;
    P.n_half = std::max(1, static_cast<int>(std::lround(a / target_spacing)));
    P.spacing = a / P.n_half;
    if (P.spacing > hmin / 4.0 * (1.0 + 1e-12))
        fail(errkind::SpacingTooCoarse, "snapped spacing exceeds min radius / 4");
    for (int i = 0; i < 3; ++i) {
        P.radius[i] = scale * spec.h[i];
        // port staircase must stay strictly inside the cube face
        if (P.radius[i] + P.spacing > a)
            fail(errkind::GeometryOverlap, "port staircase reaches the node edge; refine spacing");
        const int n = static_cast<int>(std::lround((len[i] - a) / P.spacing));
        if (n < 4)
            fail(errkind::GeometryOverlap, "branch " + std::to_string(i) + " too short for spacing");
        P.n_axial[i] = n;
    }
    return P;
}

} // namespace

VoxelMesh build_thin_junction(const NetworkSpec& spec, double eps, double target_spacing) {
    spec.validate();
    if (!(eps > 0.0) || !(eps < 1.0))
        fail(errkind::GeometryOverlap, "eps must lie in (0, 1)");
    return build_core(snap_params(spec, eps, spec.ell, target_spacing, /*caps=*/false));
}

VoxelMesh build_rescaled_node(const NetworkSpec& spec, double trunc_len, double target_spacing) {
    spec.validate();
    if (!(trunc_len >= 5.0 * spec.ell0))
        fail(errkind::TruncationTooShort, "stub truncation must be at least 5*ell0");
    return build_core(
        snap_params(spec, 1.0, {trunc_len, trunc_len, trunc_len}, target_spacing, /*caps=*/true));
}

void VoxelMesh::dump_ascii(std::ostream& os) const {
    os << "voxel mesh: spacing " << spacing << ", cells " << n_cells() << ", cube half-width "
       << cube_half << "\n";
    for (int i = 0; i < 3; ++i)
        os << "  branch " << i + 1 << ": radius " << branch_radius[i] << ", end plane "
           << branch_end[i] << ", " << n_axial[i] << " slices\n";
    // mid-plane slice orthogonal to z, marked by region
    const int kz = 0;
    os << "z = " << (kz + 0.5) * spacing << " slice (.=outside, 0=node, 1..3=branch):\n";
    for (int ky = lat_hi[1] - 1; ky >= lat_lo[1]; --ky) {
        for (int kx = lat_lo[0]; kx < lat_hi[0]; ++kx) {
            const int nx = lat_hi[0] - lat_lo[0], ny = lat_hi[1] - lat_lo[1];
            const std::int32_t id =
                lut[static_cast<std::size_t>((kz - lat_lo[2]) * ny + (ky - lat_lo[1])) * nx +
                    (kx - lat_lo[0])];
            os << (id < 0 ? '.' : static_cast<char>('0' + region[id]));
        }
        os << "\n";
    }
}

} // namespace thinflow
