#pragma once

#include <map>
#include <utility>
#include <vector>

#include "gbsim/types.hpp"

namespace gbsim {

/// One charge sector of a tensor leg.
struct Sector {
  Charge charge;
  Index extent = 0;
  friend bool operator==(const Sector&, const Sector&) = default;
};

/// A tensor leg: a flow direction (+1 outgoing, -1 incoming) and an ordered
/// list of charge sectors. The conservation rule for a tensor is
/// sum_i flow_i * charge_i == total (under the tensor's ChargeMod).
struct IndexSpec {
  int flow = +1;
  std::vector<Sector> sectors;  // sorted by charge, unique

  Index dim() const;
  /// Position of the sector with this charge, or -1.
  int find(Charge c) const;
  /// Offset of a sector's first slot in the dense (concatenated) ordering.
  Index offset(int sector_id) const;
  friend bool operator==(const IndexSpec&, const IndexSpec&) = default;
};

/// Dense data of one charge block, row-major in leg order.
struct Block {
  std::vector<Index> shape;
  Vec data;  // size == product(shape)
  Index size() const { return data.size(); }
};

using BlockKey = std::vector<int>;  // sector id per leg

/// Block-sparse tensor graded by an additive charge. Only blocks whose
/// sector charges satisfy the conservation rule can be stored.
class ChargeBlockTensor {
 public:
  ChargeBlockTensor() = default;
  ChargeBlockTensor(std::vector<IndexSpec> specs, Charge total, ChargeMod mod);

  int rank() const { return static_cast<int>(specs_.size()); }
  const IndexSpec& spec(int leg) const { return specs_[leg]; }
  const std::vector<IndexSpec>& specs() const { return specs_; }
  Charge total() const { return total_; }
  ChargeMod mod() const { return mod_; }

  bool conserves(const BlockKey& key) const;
  /// Creates (zero-filled) if absent; throws on a conservation violation.
  Block& block(const BlockKey& key);
  const Block* find(const BlockKey& key) const;
  const std::map<BlockKey, Block>& blocks() const { return blocks_; }
  std::map<BlockKey, Block>& blocks() { return blocks_; }

  std::vector<Index> block_shape(const BlockKey& key) const;
  double squared_norm() const;
  void prune(double tol = 0.0);  // drop blocks with norm <= tol

 private:
  std::vector<IndexSpec> specs_;
  Charge total_{};
  ChargeMod mod_{};
  std::map<BlockKey, Block> blocks_;
};

/// Result of a truncated blockwise SVD across a leg bipartition.
struct SvdResult {
  ChargeBlockTensor left;   // (left legs..., new bond), total 0
  ChargeBlockTensor right;  // (new bond, right legs...), total of the input
  /// Per-sector singular values of the new bond, nonincreasing within each
  /// sector, sorted by sector charge.
  std::vector<std::pair<Charge, RVec>> singular_values;
  double discarded_weight = 0.0;

  RVec merged_singular_values() const;  // sorted nonincreasing
  Index bond_dimension() const;
};

/// Pairwise contraction over the given (legA, legB) pairs. Paired legs must
/// carry identical sector lists and opposite flows.
ChargeBlockTensor contract(const ChargeBlockTensor& a,
                           const ChargeBlockTensor& b,
                           const std::vector<std::pair<int, int>>& pairs);

ChargeBlockTensor transposed(const ChargeBlockTensor& t,
                             const std::vector<int>& perm);

/// Complex conjugate: blocks conjugated, flows and total negated.
ChargeBlockTensor conjugated(const ChargeBlockTensor& t);

/// Blockwise SVD splitting after the first `left_legs` legs. Keeps at most
/// `chi_max` values across all sectors (one globally sorted list; ties break
/// toward the lower charge, then the lower in-sector position), drops values
/// with square < cutoff * (total square sum) and values below 1e-14 times
/// the largest, and reports the summed square of everything dropped.
SvdResult truncated_svd(const ChargeBlockTensor& t, int left_legs,
                        Index chi_max, double cutoff);

/// Dense expansion in the canonical ordering (per leg: sectors in charge
/// order, concatenated; whole tensor row-major in leg order).
Vec expand_dense(const ChargeBlockTensor& t);

Block permute_block(const Block& b, const std::vector<int>& perm);

}  // namespace gbsim
