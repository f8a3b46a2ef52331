#include "gbsim/block_tensor.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace gbsim {

namespace {

using RowMat =
    Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMap = Eigen::Map<RowMat>;
using ConstRowMap = Eigen::Map<const RowMat>;

Index product(const std::vector<Index>& v) {
  Index p = 1;
  for (Index x : v) p *= x;
  return p;
}

std::vector<Index> row_major_strides(const std::vector<Index>& shape) {
  std::vector<Index> s(shape.size(), 1);
  for (int i = static_cast<int>(shape.size()) - 2; i >= 0; i--)
    s[i] = s[i + 1] * shape[i + 1];
  return s;
}

}  // namespace

Index IndexSpec::dim() const {
  Index d = 0;
  for (const auto& s : sectors) d += s.extent;
  return d;
}

int IndexSpec::find(Charge c) const {
  for (size_t i = 0; i < sectors.size(); i++)
    if (sectors[i].charge == c) return static_cast<int>(i);
  return -1;
}

Index IndexSpec::offset(int sector_id) const {
  Index off = 0;
  for (int i = 0; i < sector_id; i++) off += sectors[i].extent;
  return off;
}

ChargeBlockTensor::ChargeBlockTensor(std::vector<IndexSpec> specs, Charge total,
                                     ChargeMod mod)
    : specs_(std::move(specs)), total_(reduce(total, mod)), mod_(mod) {
  for (auto& sp : specs_) {
    for (size_t i = 0; i + 1 < sp.sectors.size(); i++)
      if (!(sp.sectors[i].charge < sp.sectors[i + 1].charge))
        throw std::invalid_argument("index sectors must be sorted by charge");
    for (auto& s : sp.sectors)
      if (s.extent < 1) throw std::invalid_argument("sector extent < 1");
  }
}

bool ChargeBlockTensor::conserves(const BlockKey& key) const {
  if (key.size() != specs_.size()) return false;
  Charge q{};
  for (size_t i = 0; i < key.size(); i++) {
    if (key[i] < 0 || key[i] >= static_cast<int>(specs_[i].sectors.size()))
      return false;
    q = add(q, scaled(specs_[i].sectors[key[i]].charge, specs_[i].flow), mod_);
  }
  return q == total_;
}

std::vector<Index> ChargeBlockTensor::block_shape(const BlockKey& key) const {
  std::vector<Index> shape(key.size());
  for (size_t i = 0; i < key.size(); i++)
    shape[i] = specs_[i].sectors[key[i]].extent;
  return shape;
}

Block& ChargeBlockTensor::block(const BlockKey& key) {
  auto it = blocks_.find(key);
  if (it != blocks_.end()) return it->second;
  if (!conserves(key))
    throw std::invalid_argument("block key violates charge conservation");
  Block b;
  b.shape = block_shape(key);
  b.data = Vec::Zero(product(b.shape));
  return blocks_.emplace(key, std::move(b)).first->second;
}

const Block* ChargeBlockTensor::find(const BlockKey& key) const {
  auto it = blocks_.find(key);
  return it == blocks_.end() ? nullptr : &it->second;
}

double ChargeBlockTensor::squared_norm() const {
  double n = 0;
  for (const auto& [k, b] : blocks_) n += b.data.squaredNorm();
  return n;
}

void ChargeBlockTensor::prune(double tol) {
  for (auto it = blocks_.begin(); it != blocks_.end();)
    it = it->second.data.norm() <= tol ? blocks_.erase(it) : std::next(it);
}

Block permute_block(const Block& b, const std::vector<int>& perm) {
  const int r = static_cast<int>(b.shape.size());
  Block out;
  out.shape.resize(r);
  for (int i = 0; i < r; i++) out.shape[i] = b.shape[perm[i]];
  out.data.resize(b.data.size());
  auto in_strides = row_major_strides(b.shape);
  auto out_strides = row_major_strides(out.shape);
  // stride of the old axis perm[i] as seen from the output's linear index
  std::vector<Index> src_stride(r);
  for (int i = 0; i < r; i++) src_stride[i] = in_strides[perm[i]];
  std::vector<Index> idx(r, 0);
  const Index n = b.data.size();
  Index src = 0;
  for (Index lin = 0; lin < n; lin++) {
    out.data[lin] = b.data[src];
    for (int ax = r - 1; ax >= 0; ax--) {
      idx[ax]++;
      src += src_stride[ax];
      if (idx[ax] < out.shape[ax]) break;
      src -= src_stride[ax] * out.shape[ax];
      idx[ax] = 0;
    }
  }
  return out;
}

ChargeBlockTensor transposed(const ChargeBlockTensor& t,
                             const std::vector<int>& perm) {
  if (static_cast<int>(perm.size()) != t.rank())
    throw std::invalid_argument("permutation rank mismatch");
  std::vector<IndexSpec> specs(t.rank());
  for (int i = 0; i < t.rank(); i++) specs[i] = t.spec(perm[i]);
  ChargeBlockTensor out(std::move(specs), t.total(), t.mod());
  for (const auto& [key, blk] : t.blocks()) {
    BlockKey nk(key.size());
    for (size_t i = 0; i < key.size(); i++) nk[i] = key[perm[i]];
    out.block(nk) = permute_block(blk, perm);
  }
  return out;
}

ChargeBlockTensor conjugated(const ChargeBlockTensor& t) {
  std::vector<IndexSpec> specs = t.specs();
  for (auto& sp : specs) sp.flow = -sp.flow;
  ChargeBlockTensor out(std::move(specs), scaled(t.total(), -1), t.mod());
  for (const auto& [key, blk] : t.blocks()) {
    Block& ob = out.block(key);
    ob.data = blk.data.conjugate();
  }
  return out;
}

ChargeBlockTensor contract(const ChargeBlockTensor& a,
                           const ChargeBlockTensor& b,
                           const std::vector<std::pair<int, int>>& pairs) {
  if (a.mod() != b.mod())
    throw std::invalid_argument("contract: charge arithmetic mismatch");
  std::vector<bool> acon(a.rank(), false), bcon(b.rank(), false);
  for (auto [ia, ib] : pairs) {
    if (ia < 0 || ia >= a.rank() || ib < 0 || ib >= b.rank())
      throw std::invalid_argument("contract: leg index out of range");
    if (acon[ia] || bcon[ib])
      throw std::invalid_argument("contract: repeated leg");
    if (a.spec(ia).sectors != b.spec(ib).sectors)
      throw std::invalid_argument("contract: paired sector lists differ");
    if (a.spec(ia).flow != -b.spec(ib).flow)
      throw std::invalid_argument("contract: paired flows must be opposite");
    acon[ia] = bcon[ib] = true;
  }
  std::vector<int> afree, bfree;
  for (int i = 0; i < a.rank(); i++)
    if (!acon[i]) afree.push_back(i);
  for (int i = 0; i < b.rank(); i++)
    if (!bcon[i]) bfree.push_back(i);

  std::vector<IndexSpec> specs;
  for (int i : afree) specs.push_back(a.spec(i));
  for (int i : bfree) specs.push_back(b.spec(i));
  ChargeBlockTensor out(std::move(specs), add(a.total(), b.total(), a.mod()),
                        a.mod());

  // Group b's blocks by their contracted sector ids (in `pairs` order).
  std::map<std::vector<int>, std::vector<const std::pair<const BlockKey, Block>*>>
      bgroups;
  for (const auto& kb : b.blocks()) {
    std::vector<int> con(pairs.size());
    for (size_t p = 0; p < pairs.size(); p++) con[p] = kb.first[pairs[p].second];
    bgroups[con].push_back(&kb);
  }

  // Permutations bringing contracted legs to the back of a / front of b.
  std::vector<int> aperm = afree, bperm;
  for (auto [ia, ib] : pairs) aperm.push_back(ia);
  for (auto [ia, ib] : pairs) bperm.push_back(ib);
  for (int i : bfree) bperm.push_back(i);

  for (const auto& ka : a.blocks()) {
    std::vector<int> con(pairs.size());
    for (size_t p = 0; p < pairs.size(); p++) con[p] = ka.first[pairs[p].first];
    auto git = bgroups.find(con);
    if (git == bgroups.end()) continue;

    Block pa = permute_block(ka.second, aperm);
    Index afree_ext = 1, acon_ext = 1;
    for (size_t i = 0; i < afree.size(); i++) afree_ext *= pa.shape[i];
    for (size_t i = afree.size(); i < pa.shape.size(); i++)
      acon_ext *= pa.shape[i];
    ConstRowMap am(pa.data.data(), afree_ext, acon_ext);

    BlockKey okey(afree.size() + bfree.size());
    for (size_t i = 0; i < afree.size(); i++) okey[i] = ka.first[afree[i]];

    for (const auto* kb : git->second) {
      Block pb = permute_block(kb->second, bperm);
      Index bfree_ext = 1;
      for (size_t i = pairs.size(); i < pb.shape.size(); i++)
        bfree_ext *= pb.shape[i];
      ConstRowMap bm(pb.data.data(), acon_ext, bfree_ext);
      for (size_t i = 0; i < bfree.size(); i++)
        okey[afree.size() + i] = kb->first[bfree[i]];
      Block& ob = out.block(okey);
      RowMap om(ob.data.data(), afree_ext, bfree_ext);
      om.noalias() += am * bm;
    }
  }
  return out;
}

Vec expand_dense(const ChargeBlockTensor& t) {
  std::vector<Index> dims(t.rank());
  for (int i = 0; i < t.rank(); i++) dims[i] = t.spec(i).dim();
  Vec out = Vec::Zero(product(dims));
  auto gstr = row_major_strides(dims);
  for (const auto& [key, blk] : t.blocks()) {
    std::vector<Index> base(t.rank()), bstr = row_major_strides(blk.shape);
    for (int i = 0; i < t.rank(); i++) base[i] = t.spec(i).offset(key[i]);
    std::vector<Index> idx(t.rank(), 0);
    for (Index lin = 0; lin < blk.size(); lin++) {
      Index g = 0;
      for (int i = 0; i < t.rank(); i++) g += (base[i] + idx[i]) * gstr[i];
      out[g] = blk.data[lin];
      for (int ax = t.rank() - 1; ax >= 0; ax--) {
        if (++idx[ax] < blk.shape[ax]) break;
        idx[ax] = 0;
      }
    }
  }
  return out;
}

RVec SvdResult::merged_singular_values() const {
  std::vector<double> all;
  for (const auto& [q, v] : singular_values)
    for (Index i = 0; i < v.size(); i++) all.push_back(v[i]);
  std::sort(all.begin(), all.end(), std::greater<>());
  return Eigen::Map<RVec>(all.data(), static_cast<Index>(all.size()));
}

Index SvdResult::bond_dimension() const {
  Index n = 0;
  for (const auto& [q, v] : singular_values) n += v.size();
  return n;
}

namespace {

struct SectorSvd {
  Charge charge;
  std::vector<BlockKey> row_combos, col_combos;  // lexicographic order
  std::vector<Index> row_off, col_off;
  Index rows = 0, cols = 0;
  Mat u, v;  // thin factors
  RVec s;
  Index kept = 0;
};

void dense_svd(const Mat& m, Mat& u, RVec& s, Mat& v) {
  // JacobiSVD is the accuracy workhorse for small blocks; BDCSVD for large.
  if (std::min(m.rows(), m.cols()) <= 64) {
    Eigen::JacobiSVD<Mat> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    u = svd.matrixU();
    s = svd.singularValues();
    v = svd.matrixV();
  } else {
    Eigen::BDCSVD<Mat> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    u = svd.matrixU();
    s = svd.singularValues();
    v = svd.matrixV();
  }
}

}  // namespace

SvdResult truncated_svd(const ChargeBlockTensor& t, int left_legs,
                        Index chi_max, double cutoff) {
  if (chi_max < 1) throw std::invalid_argument("truncated_svd: chi_max < 1");
  if (left_legs < 1 || left_legs >= t.rank())
    throw std::invalid_argument("truncated_svd: bad bipartition");
  if (t.blocks().empty())
    throw std::invalid_argument("truncated_svd: tensor has no blocks");
  // Group blocks by the combined left charge (with left flows applied).
  std::map<Charge, SectorSvd> groups;
  for (const auto& [key, blk] : t.blocks()) {
    Charge q{};
    for (int i = 0; i < left_legs; i++)
      q = add(q, scaled(t.spec(i).sectors[key[i]].charge, t.spec(i).flow),
              t.mod());
    auto& g = groups[q];
    g.charge = q;
    BlockKey rk(key.begin(), key.begin() + left_legs);
    BlockKey ck(key.begin() + left_legs, key.end());
    if (std::find(g.row_combos.begin(), g.row_combos.end(), rk) ==
        g.row_combos.end())
      g.row_combos.push_back(rk);
    if (std::find(g.col_combos.begin(), g.col_combos.end(), ck) ==
        g.col_combos.end())
      g.col_combos.push_back(ck);
  }

  double total_sq = 0;
  for (auto& [q, g] : groups) {
    std::sort(g.row_combos.begin(), g.row_combos.end());
    std::sort(g.col_combos.begin(), g.col_combos.end());
    auto extent = [&](const BlockKey& combo, int base) {
      Index e = 1;
      for (size_t i = 0; i < combo.size(); i++)
        e *= t.spec(base + static_cast<int>(i)).sectors[combo[i]].extent;
      return e;
    };
    g.row_off.resize(g.row_combos.size());
    g.col_off.resize(g.col_combos.size());
    for (size_t i = 0; i < g.row_combos.size(); i++) {
      g.row_off[i] = g.rows;
      g.rows += extent(g.row_combos[i], 0);
    }
    for (size_t i = 0; i < g.col_combos.size(); i++) {
      g.col_off[i] = g.cols;
      g.cols += extent(g.col_combos[i], left_legs);
    }
    Mat m = Mat::Zero(g.rows, g.cols);
    for (size_t ri = 0; ri < g.row_combos.size(); ri++)
      for (size_t ci = 0; ci < g.col_combos.size(); ci++) {
        BlockKey key = g.row_combos[ri];
        key.insert(key.end(), g.col_combos[ci].begin(), g.col_combos[ci].end());
        const Block* blk = t.find(key);
        if (!blk) continue;
        Index re = extent(g.row_combos[ri], 0);
        Index ce = extent(g.col_combos[ci], left_legs);
        m.block(g.row_off[ri], g.col_off[ci], re, ce) =
            ConstRowMap(blk->data.data(), re, ce);
      }
    dense_svd(m, g.u, g.s, g.v);
    total_sq += g.s.squaredNorm();
  }

  // Globally merged truncation order: value desc, then lower charge,
  // then lower in-sector index.
  struct Entry {
    double s;
    Charge q;
    Index i;
  };
  std::vector<Entry> order;
  double smax = 0;
  for (auto& [q, g] : groups) {
    for (Index i = 0; i < g.s.size(); i++) {
      order.push_back({g.s[i], q, i});
      smax = std::max(smax, g.s[i]);
    }
  }
  std::sort(order.begin(), order.end(), [](const Entry& x, const Entry& y) {
    if (x.s != y.s) return x.s > y.s;
    if (x.q != y.q) return x.q < y.q;
    return x.i < y.i;
  });

  SvdResult res;
  Index kept_total = 0;
  for (const auto& e : order) {
    bool keep = kept_total < chi_max && e.s >= 1e-14 * smax &&
                !(e.s * e.s < cutoff * total_sq);
    if (keep) {
      groups[e.q].kept = std::max(groups[e.q].kept, e.i + 1);
      kept_total++;
    } else {
      res.discarded_weight += e.s * e.s;
    }
  }
  // Keep at least one value so downstream bond structure stays well formed.
  if (kept_total == 0 && !order.empty()) {
    const auto& e = order.front();
    groups[e.q].kept = 1;
    res.discarded_weight -= e.s * e.s;
  }

  // New bond spec (sorted by charge since `groups` is an ordered map).
  IndexSpec bond_left{-1, {}}, bond_right{+1, {}};
  for (auto& [q, g] : groups)
    if (g.kept > 0) {
      bond_left.sectors.push_back({q, g.kept});
      bond_right.sectors.push_back({q, g.kept});
    }

  std::vector<IndexSpec> lspecs(t.specs().begin(),
                                t.specs().begin() + left_legs);
  lspecs.push_back(bond_left);
  std::vector<IndexSpec> rspecs{bond_right};
  rspecs.insert(rspecs.end(), t.specs().begin() + left_legs, t.specs().end());
  res.left = ChargeBlockTensor(std::move(lspecs), Charge{}, t.mod());
  res.right = ChargeBlockTensor(std::move(rspecs), t.total(), t.mod());

  int bond_id = 0;
  for (auto& [q, g] : groups) {
    if (g.kept == 0) continue;
    res.singular_values.emplace_back(q, g.s.head(g.kept));
    for (size_t ri = 0; ri < g.row_combos.size(); ri++) {
      BlockKey key = g.row_combos[ri];
      key.push_back(bond_id);
      Block& ob = res.left.block(key);
      Index rows = ob.size() / g.kept;
      RowMap(ob.data.data(), rows, g.kept) =
          g.u.block(g.row_off[ri], 0, rows, g.kept);
    }
    for (size_t ci = 0; ci < g.col_combos.size(); ci++) {
      BlockKey key{bond_id};
      key.insert(key.end(), g.col_combos[ci].begin(), g.col_combos[ci].end());
      Block& ob = res.right.block(key);
      Index cols = ob.size() / g.kept;
      RowMap(ob.data.data(), g.kept, cols) =
          g.v.block(g.col_off[ci], 0, cols, g.kept).adjoint();
    }
    bond_id++;
  }
  return res;
}

}  // namespace gbsim
