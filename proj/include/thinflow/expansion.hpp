#pragma once

#include "thinflow/boundary_layer.hpp"
#include "thinflow/disk_corrector.hpp"
#include "thinflow/edge_transport.hpp"
#include "thinflow/geometry.hpp"
#include "thinflow/gridfn.hpp"
#include "thinflow/node_layer.hpp"
#include "thinflow/order.hpp"
#include "thinflow/velocity.hpp"

#include <array>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

namespace thinflow {

/// Evaluation zones of the composite series. The junction is split per branch
/// into the inner node region (rescaled coordinates), a matching band where
/// the node corrector hands over to the one-dimensional branch fields, the far
/// cylinder, and the strip next to the base where the exponential layer acts.
enum class Zone { CylFar, NodeRegion, Blend, BaseLayer };

struct ZonedPoint {
    std::array<double, 3> x{};
    double t = 0.0;
    Zone zone = Zone::NodeRegion;
    int edge = -1;      // branch of the zone; -1 in the node region
    double axial = 0.0; // branch coordinate (0 in the node region)
};

/// "cyl_far_2", "node_region", "blend_1", "base_layer_3" (branches 1-based)
std::string zone_name(const ZonedPoint& zp);

/// Zone classification of a physical point. Cells are assigned with
/// lower-closed interval conventions so the partition is deterministic:
/// branch points with axial coordinate in [eps*ell0, 2*ell0*eps^gamma) belong
/// to the node region, [2*ell0*eps^gamma, 3*ell0*eps^gamma) to the matching
/// band, [3*ell0*eps^gamma, ell - 2*delta) to the far cylinder and the rest to
/// the base strip. Throws OutOfDomain outside the junction or the time range.
ZonedPoint classify_point(const NetworkSpec& spec, double eps,
                          const std::array<double, 3>& x, double t);

/// Every coefficient handle of one scale order: branch fields, transverse
/// correctors (null at orders without transverse structure), the node
/// corrector, the vertex flux budget of this order, and the base layers
/// (null on branches whose base is an inflow end).
struct ExpansionTerm {
    OrderIndex order;
    std::array<Field2, 3> w;
    std::array<std::shared_ptr<const DiskCorrector>, 3> u{};
    std::shared_ptr<const NodeField> node;
    std::shared_ptr<const GluingConstant> d;
    std::array<std::shared_ptr<const LayerTerm>, 3> layer{};
};

struct ExpansionOptions {
    EdgeGridOptions edge{};
    DiskGridOptions disk{};
    NodeLayerOptions node{};
    double node_trunc = 3.0;    // rescaled stub length of the node domain
    double node_spacing = 0.05; // voxel pitch of the node domain
};

/// The assembled scale: terms sorted by exponent, the shared node mesh and
/// potential they were solved on, and the recorded dependency edges of the
/// construction (one line per ingredient, for audit).
struct ExpansionOrderSet {
    NetworkSpec spec;
    VelocityModel vel;
    BoundaryData data;
    int M = 0;
    std::shared_ptr<const VoxelMesh> mesh;
    std::shared_ptr<const NodePotential> pot;
    std::vector<ExpansionTerm> terms;
    std::vector<std::string> audit;

    const ExpansionTerm* find(OrderIndex order) const;
};

/// Assemble all coefficients of the order-M scale in dependency order: the
/// leading branch pair, then per order the vertex flux budget, the branch
/// fields, the transverse correctors, the node corrector, and the base
/// layers. Throws MOrderTooSmall for M < 1 and propagates validation and
/// solver errors of the ingredient problems.
ExpansionOrderSet build_expansion(const NetworkSpec& spec, const VelocityModel& vel,
                                  const BoundaryData& data, int M,
                                  const ExpansionOptions& opt = {});

/// One term's contribution at a point: weight = eps^exponent, value = the
/// zone formula of the coefficient, contribution = weight * value.
struct TermSample {
    OrderIndex order;
    double weight = 0.0;
    double value = 0.0;
};

struct PointSample {
    ZonedPoint at;
    double value = 0.0;              // sum of the contributions
    std::vector<TermSample> terms;   // exponent-sorted, one per scale order
};

/// Point evaluation of the partial sum: classify the zone, then combine the
/// zone formula per order (branch field plus transverse corrector plus base
/// layer in the cylinder; node corrector in the node region; cutoff blend of
/// the two across the matching band). Throws OutOfDomain off the junction.
PointSample evaluate_terms(const ExpansionOrderSet& set, double eps,
                           const std::array<double, 3>& x, double t);
double evaluate(const ExpansionOrderSet& set, double eps,
                const std::array<double, 3>& x, double t);

/// Batch evaluation: reads comma-separated rows "x,y,z,t" (an optional header
/// row is allowed), writes "value,zone,<one column per order tag>" with the
/// per-order contributions. Throws IoFailure on malformed rows.
void evaluate_csv(const ExpansionOrderSet& set, double eps, std::istream& in,
                  std::ostream& out);

} // namespace thinflow
