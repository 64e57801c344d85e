#pragma once

#include <cstdint>
#include <vector>

#include "lamar/dataset.hpp"

namespace lamar {

// Synthetic dataset with label signal planted in embedding geometry.
//
// Per split (train, val, test) and per base sample i, drawing from one
// mt19937_64 stream seeded with derive_seed(seed, kFixture), in this order:
//   (once, before any split) R: d x d standard normals, row-major, then
//       modified Gram-Schmidt over rows -> orthogonal matrix
//   t     = normalize(d standard normals)             truthful caption
//   noise = normalize(d standard normals)             image noise direction
//   image = normalize(R t + image_noise * noise)      image_noise is a norm, like delta
//   orig_len = uniform_int[40, 200]
//   v     = normalize(d standard normals)             manipulation direction
//   ratio = uniform[0.8, 1.6)
// Records (all sharing the image of sample i, ids "<split>-<i>:<t|m|o>"):
//   True: caption = truth = t, cap_len = orig_len
//   MC:   caption = normalize(t + delta v) (t itself when delta == 0),
//         truth = t, cap_len = round(orig_len * ratio)
//   OOC:  caption = t of sample (i+1) mod n, truth = t, cap_len = that
//         sample's orig_len
// Embeddings are normalized in double precision and stored as float.
struct FixtureSpec {
  std::size_t n_train = 100;  // per class
  std::size_t n_val = 0;
  std::size_t n_test = 0;
  std::size_t dim = 32;
  double delta = 0.8;
  double image_noise = 0.1;
  std::uint64_t seed = 0;
  std::vector<Label> labels = {Label::kTrue, Label::kMiscaptioned, Label::kOutOfContext};

  void validate() const;
};

Dataset generate_fixture(const FixtureSpec& spec);

nlohmann::json to_json(const FixtureSpec& spec);

}  // namespace lamar
