#include "padr/rule.hpp"

#include <algorithm>
#include <cstring>
#include <limits>

namespace padr::rule {

namespace {

void check_features(const Theta& theta, Eigen::Index p) {
  if (p != theta.cfg().p)
    throw DimensionError("feature vector has length " + std::to_string(p) + ", rule expects " +
                         std::to_string(theta.cfg().p));
}

std::vector<Eigen::Index> distinct_ids(std::span<const Eigen::Index> ids, Eigen::Index n) {
  std::vector<Eigen::Index> out;
  if (ids.empty()) {
    out.resize(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = i;
    return out;
  }
  out.assign(ids.begin(), ids.end());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  if (out.front() < 0 || out.back() >= n) throw DimensionError("sample id out of range");
  return out;
}

// Form for g_j - h_k over the blocks of `out`; k < 0 drops the h term.
AffineForm piece_difference(const HypothesisConfig& cfg, const Eigen::Ref<const Vector>& x,
                            int out, int j, int k) {
  AffineForm form;
  const int block = cfg.block();
  const std::size_t len = static_cast<std::size_t>(block) * (k >= 0 ? 2 : 1);
  form.idx.reserve(len);
  form.coef.reserve(len);
  auto push_block = [&](Eigen::Index start, double sign) {
    for (int i = 0; i < cfg.p; ++i) {
      form.idx.push_back(start + i);
      form.coef.push_back(sign * x[i]);
    }
    form.idx.push_back(start + cfg.p);
    form.coef.push_back(sign);
  };
  push_block(cfg.offset(out, j), 1.0);
  if (k >= 0) push_block(cfg.offset(out, cfg.K1 + k), -1.0);
  return form;
}

}  // namespace

double piece_value(const Theta& theta, int out, int j, const Eigen::Ref<const Vector>& x) {
  const auto& cfg = theta.cfg();
  const Eigen::Index off = cfg.offset(out, j);
  return theta.flat().segment(off, cfg.p).dot(x) + theta.flat()[off + cfg.p];
}

Vector eval(const Theta& theta, const Eigen::Ref<const Vector>& x) {
  check_features(theta, x.size());
  const auto& cfg = theta.cfg();
  Vector z(cfg.d);
  for (int out = 0; out < cfg.d; ++out) {
    double g = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < cfg.K1; ++k) g = std::max(g, piece_value(theta, out, k, x));
    double h = 0.0;
    if (cfg.K2 > 0) {
      h = -std::numeric_limits<double>::infinity();
      for (int k = 0; k < cfg.K2; ++k) h = std::max(h, piece_value(theta, out, cfg.K1 + k, x));
    }
    z[out] = g - h;
  }
  return z;
}

Matrix eval_all(const Theta& theta, const Matrix& features) {
  check_features(theta, features.cols());
  Matrix z(features.rows(), theta.cfg().d);
  for (Eigen::Index r = 0; r < features.rows(); ++r)
    z.row(r) = eval(theta, features.row(r).transpose()).transpose();
  return z;
}

std::uint64_t theta_tag(const Theta& theta) {
  // FNV-1a over the config and raw parameter bytes.
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* data, std::size_t len) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  };
  const auto& c = theta.cfg();
  const int dims[4] = {c.d, c.K1, c.K2, c.p};
  mix(dims, sizeof(dims));
  mix(&c.mu, sizeof(c.mu));
  mix(theta.flat().data(), sizeof(double) * static_cast<std::size_t>(theta.flat().size()));
  return h;
}

std::vector<int> active_indices(std::span<const double> values, double epsilon) {
  if (values.empty()) return {};
  const double top = *std::max_element(values.begin(), values.end());
  std::vector<int> out;
  for (std::size_t i = 0; i < values.size(); ++i)
    if (values[i] >= top - epsilon) out.push_back(static_cast<int>(i));
  return out;
}

std::uint64_t ActiveSets::mapping_count(std::uint64_t cap) const {
  std::uint64_t count = 1;
  for (const auto& e : entries) {
    const std::uint64_t factor =
        static_cast<std::uint64_t>(e.g.size()) * std::max<std::uint64_t>(1, e.h.size());
    if (count > (cap + 1) / factor + 1) return cap + 1;
    count *= factor;
    if (count > cap) return cap + 1;
  }
  return count;
}

ActiveSets active_sets(const Theta& theta_ref, const Dataset& data, double epsilon,
                       std::span<const Eigen::Index> sample_ids) {
  if (!(epsilon >= 0.0)) throw ConfigError("epsilon must be >= 0");
  const auto& cfg = theta_ref.cfg();
  check_features(theta_ref, data.p());
  ActiveSets sets;
  sets.epsilon = epsilon;
  sets.d = cfg.d;
  sets.K2 = cfg.K2;
  sets.ref_tag = theta_tag(theta_ref);
  sets.sample_ids = distinct_ids(sample_ids, data.n());
  sets.entries.reserve(sets.sample_ids.size() * static_cast<std::size_t>(cfg.d));
  std::vector<double> gv(static_cast<std::size_t>(cfg.K1)), hv(static_cast<std::size_t>(cfg.K2));
  for (Eigen::Index s : sets.sample_ids) {
    const Vector x = data.features().row(s).transpose();
    for (int out = 0; out < cfg.d; ++out) {
      for (int k = 0; k < cfg.K1; ++k) gv[k] = piece_value(theta_ref, out, k, x);
      for (int k = 0; k < cfg.K2; ++k) hv[k] = piece_value(theta_ref, out, cfg.K1 + k, x);
      sets.entries.push_back({active_indices(gv, epsilon), active_indices(hv, epsilon)});
    }
  }
  return sets;
}

std::size_t IndexMapping::row_of(Eigen::Index sample) const {
  auto it = std::lower_bound(sample_ids.begin(), sample_ids.end(), sample);
  if (it == sample_ids.end() || *it != sample)
    throw DimensionError("index mapping has no entry for sample " + std::to_string(sample));
  return static_cast<std::size_t>(it - sample_ids.begin());
}

namespace {

IndexMapping empty_mapping(const ActiveSets& sets) {
  IndexMapping m;
  m.d = sets.d;
  m.ref_tag = sets.ref_tag;
  m.sample_ids = sets.sample_ids;
  m.i1.resize(sets.entries.size());
  m.i2.resize(sets.entries.size(), -1);
  return m;
}

}  // namespace

IndexMapping draw_index_mapping(const ActiveSets& sets, const Rng& rng) {
  IndexMapping m = empty_mapping(sets);
  for (std::size_t r = 0; r < sets.sample_ids.size(); ++r) {
    Rng local = rng.derive(static_cast<std::uint64_t>(sets.sample_ids[r]));
    for (int out = 0; out < sets.d; ++out) {
      const auto& e = sets.at(r, out);
      if (e.g.empty()) throw DimensionError("empty active set");
      const std::size_t at = r * sets.d + out;
      m.i1[at] = e.g[local.below(e.g.size())];
      m.i2[at] = e.h.empty() ? -1 : e.h[local.below(e.h.size())];
    }
  }
  return m;
}

IndexMapping first_index_mapping(const ActiveSets& sets) {
  IndexMapping m = empty_mapping(sets);
  for (std::size_t at = 0; at < sets.entries.size(); ++at) {
    m.i1[at] = sets.entries[at].g.front();
    m.i2[at] = sets.entries[at].h.empty() ? -1 : sets.entries[at].h.front();
  }
  return m;
}

void for_each_mapping(const ActiveSets& sets, const std::function<void(const IndexMapping&)>& fn) {
  IndexMapping m = first_index_mapping(sets);
  // Odometer over (entry, component) digits.
  const std::size_t digits = sets.entries.size() * 2;
  std::vector<std::size_t> pos(digits, 0);
  while (true) {
    fn(m);
    std::size_t dgt = 0;
    for (; dgt < digits; ++dgt) {
      const auto& e = sets.entries[dgt / 2];
      const auto& choices = (dgt % 2 == 0) ? e.g : e.h;
      if (choices.size() <= 1) continue;
      if (++pos[dgt] < choices.size()) {
        ((dgt % 2 == 0) ? m.i1 : m.i2)[dgt / 2] = choices[pos[dgt]];
        break;
      }
      pos[dgt] = 0;
      ((dgt % 2 == 0) ? m.i1 : m.i2)[dgt / 2] = choices[0];
    }
    if (dgt == digits) return;
  }
}

double AffineForm::eval(const Vector& theta) const {
  double v = offset;
  for (std::size_t i = 0; i < idx.size(); ++i) v += coef[i] * theta[idx[i]];
  return v;
}

void AffineForm::add_to(Vector& grad, double weight) const {
  for (std::size_t i = 0; i < idx.size(); ++i) grad[idx[i]] += weight * coef[i];
}

AffineForm AffineForm::scaled(double factor, double shift) const {
  AffineForm f{idx, coef, factor * offset + shift};
  for (auto& c : f.coef) c *= factor;
  return f;
}

double InnerPair::upper_value(const Vector& theta, int* argmax) const {
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < upper.size(); ++i) {
    const double v = upper[i].eval(theta);
    if (v > best) {
      best = v;
      if (argmax) *argmax = static_cast<int>(i);
    }
  }
  return best;
}

double InnerPair::lower_value(const Vector& theta, int* argmin) const {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < lower.size(); ++i) {
    const double v = lower[i].eval(theta);
    if (v < best) {
      best = v;
      if (argmin) *argmin = static_cast<int>(i);
    }
  }
  return best;
}

InnerSurrogates build_inner_surrogates(const Theta& theta_ref, const Dataset& data,
                                       const IndexMapping& mapping,
                                       std::span<const Eigen::Index> sample_ids) {
  const auto& cfg = theta_ref.cfg();
  check_features(theta_ref, data.p());
  if (mapping.ref_tag != theta_tag(theta_ref) || mapping.d != cfg.d)
    throw DimensionError("index mapping was not drawn at this reference point");
  InnerSurrogates out;
  out.d = cfg.d;
  if (sample_ids.empty()) {
    out.sample_ids.resize(static_cast<std::size_t>(data.n()));
    for (Eigen::Index i = 0; i < data.n(); ++i) out.sample_ids[static_cast<std::size_t>(i)] = i;
  } else {
    out.sample_ids.assign(sample_ids.begin(), sample_ids.end());
  }
  out.entries.reserve(out.sample_ids.size() * static_cast<std::size_t>(cfg.d));
  for (Eigen::Index s : out.sample_ids) {
    const std::size_t row = mapping.row_of(s);
    const Vector x = data.features().row(s).transpose();
    for (int o = 0; o < cfg.d; ++o) {
      const int i1 = mapping.i1[row * cfg.d + o];
      const int i2 = mapping.i2[row * cfg.d + o];
      if (i1 < 0 || i1 >= cfg.K1 || (cfg.K2 > 0 && (i2 < 0 || i2 >= cfg.K2)))
        throw DimensionError("index mapping entry out of range");
      InnerPair pair;
      pair.upper.reserve(static_cast<std::size_t>(cfg.K1));
      for (int k = 0; k < cfg.K1; ++k)
        pair.upper.push_back(piece_difference(cfg, x, o, k, cfg.K2 > 0 ? i2 : -1));
      if (cfg.K2 > 0) {
        pair.lower.reserve(static_cast<std::size_t>(cfg.K2));
        for (int k = 0; k < cfg.K2; ++k) pair.lower.push_back(piece_difference(cfg, x, o, i1, k));
      } else {
        pair.lower.push_back(piece_difference(cfg, x, o, i1, -1));
      }
      out.entries.push_back(std::move(pair));
    }
  }
  return out;
}

}  // namespace padr::rule
