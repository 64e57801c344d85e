#include "lamar/fixture.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "lamar/error.hpp"
#include "lamar/rng.hpp"

namespace lamar {

namespace {

std::vector<Real> normals(Rng& rng, std::size_t d) {
  std::vector<Real> v(d);
  for (auto& x : v) x = rng.normal();
  return v;
}

std::vector<Real> normalized(std::vector<Real> v) {
  Real sq = 0.0;
  for (Real x : v) sq += x * x;
  const Real n = std::sqrt(sq);
  if (!(n > 0.0)) throw Error(ErrorCode::kZeroNorm, "fixture: degenerate zero vector");
  for (auto& x : v) x /= n;
  return v;
}

std::vector<std::vector<Real>> random_rotation(Rng& rng, std::size_t d) {
  std::vector<std::vector<Real>> rows(d);
  for (auto& r : rows) r = normals(rng, d);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      Real dot = 0.0;
      for (std::size_t k = 0; k < d; ++k) dot += rows[i][k] * rows[j][k];
      for (std::size_t k = 0; k < d; ++k) rows[i][k] -= dot * rows[j][k];
    }
    rows[i] = normalized(std::move(rows[i]));
  }
  return rows;
}

std::vector<float> to_float(const std::vector<Real>& v) {
  return std::vector<float>(v.begin(), v.end());
}

std::string record_id(Split split, std::size_t i, char suffix) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s-%06zu:%c", to_string(split).c_str(), i, suffix);
  return buf;
}

bool has_label(const FixtureSpec& spec, Label l) {
  return std::find(spec.labels.begin(), spec.labels.end(), l) != spec.labels.end();
}

}  // namespace

void FixtureSpec::validate() const {
  if (dim < 2) {
    throw Error(ErrorCode::kInvalidArgument, "fixture: dim must be >= 2 to define a rotation");
  }
  if (n_train == 0) throw Error(ErrorCode::kInvalidArgument, "fixture: n_train must be positive");
  if (!(delta >= 0.0) || !(image_noise >= 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "fixture: delta and image_noise must be >= 0");
  }
  if (labels.empty()) throw Error(ErrorCode::kInvalidArgument, "fixture: empty label set");
  if (has_label(*this, Label::kOutOfContext)) {
    for (std::size_t n : {n_train, n_val, n_test}) {
      if (n == 1) {
        throw Error(ErrorCode::kInvalidArgument,
                    "fixture: out-of-context records need at least 2 samples per split");
      }
    }
  }
}

nlohmann::json to_json(const FixtureSpec& s) {
  nlohmann::json labels = nlohmann::json::array();
  for (Label l : s.labels) labels.push_back(to_string(l));
  return {{"n_train", s.n_train}, {"n_val", s.n_val},   {"n_test", s.n_test},
          {"dim", s.dim},         {"delta", s.delta},   {"image_noise", s.image_noise},
          {"seed", s.seed},       {"labels", labels}};
}

Dataset generate_fixture(const FixtureSpec& spec) {
  spec.validate();
  const std::size_t d = spec.dim;
  Rng rng(spec.seed, RngDomain::kFixture);
  const auto rotation = random_rotation(rng, d);

  Dataset ds;
  ds.manifest.dim = d;
  ds.manifest.seed = spec.seed;
  ds.manifest.fixture = to_json(spec);

  const std::pair<Split, std::size_t> splits[] = {
      {Split::kTrain, spec.n_train}, {Split::kVal, spec.n_val}, {Split::kTest, spec.n_test}};
  for (const auto& [split, n] : splits) {
    struct Base {
      std::vector<float> truth;
      std::vector<float> image;
      std::vector<float> falsified;
      std::uint32_t orig_len;
      std::uint32_t mc_len;
    };
    std::vector<Base> base(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto t = normalized(normals(rng, d));
      const auto noise = normalized(normals(rng, d));
      std::vector<Real> img(d);
      for (std::size_t r = 0; r < d; ++r) {
        Real dot = 0.0;
        for (std::size_t k = 0; k < d; ++k) dot += rotation[r][k] * t[k];
        img[r] = dot + spec.image_noise * noise[r];
      }
      const auto orig_len = static_cast<std::uint32_t>(rng.uniform_int(40, 200));
      const auto v = normalized(normals(rng, d));
      const Real ratio = rng.uniform(0.8, 1.6);

      Base& b = base[i];
      b.truth = to_float(t);
      b.image = to_float(normalized(img));
      if (spec.delta == 0.0) {
        b.falsified = b.truth;
      } else {
        std::vector<Real> f(d);
        for (std::size_t k = 0; k < d; ++k) f[k] = t[k] + spec.delta * v[k];
        b.falsified = to_float(normalized(f));
      }
      b.orig_len = orig_len;
      b.mc_len = static_cast<std::uint32_t>(std::llround(orig_len * ratio));
    }
    for (std::size_t i = 0; i < n; ++i) {
      const Base& b = base[i];
      for (Label label : spec.labels) {
        EmbeddingRecord r;
        r.split = split;
        r.label = label;
        r.image = b.image;
        r.truth = b.truth;
        r.orig_len = b.orig_len;
        switch (label) {
          case Label::kTrue:
            r.id = record_id(split, i, 't');
            r.caption = b.truth;
            r.cap_len = b.orig_len;
            break;
          case Label::kMiscaptioned:
            r.id = record_id(split, i, 'm');
            r.caption = b.falsified;
            r.cap_len = b.mc_len;
            break;
          case Label::kOutOfContext: {
            const Base& other = base[(i + 1) % n];
            r.id = record_id(split, i, 'o');
            r.caption = other.truth;
            r.cap_len = other.orig_len;
            break;
          }
        }
        ds.records.push_back(std::move(r));
      }
    }
  }
  ds.recount();
  validate(ds);
  return ds;
}

}  // namespace lamar
