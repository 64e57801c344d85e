#include "lamar/fusion.hpp"

#include "lamar/error.hpp"

namespace lamar::fusion {

namespace {

void fill_rows(std::span<const Real> img, std::span<const Real> cap, Tensor& out,
               std::size_t base) {
  for (std::size_t c = 0; c < img.size(); ++c) {
    out(base + 0, c) = img[c];
    out(base + 1, c) = img[c] + cap[c];
    out(base + 2, c) = img[c] - cap[c];
    out(base + 3, c) = img[c] * cap[c];
    out(base + 4, c) = cap[c];
  }
}

}  // namespace

FusedRepresentation::FusedRepresentation(Tensor rows) : rows_(std::move(rows)) {
  if (rows_.rows() != kFusedRows) {
    throw Error(ErrorCode::kShapeMismatch,
                "fusion: fused matrix must have 5 rows, got " + rows_.shape_string());
  }
}

FusedRepresentation fuse(std::span<const Real> image, std::span<const Real> caption) {
  if (image.size() != caption.size() || image.empty()) {
    throw Error(ErrorCode::kDimMismatch, "fuse: image dim " + std::to_string(image.size()) +
                                             " != caption dim " + std::to_string(caption.size()));
  }
  Tensor out(kFusedRows, image.size());
  fill_rows(image, caption, out, 0);
  return FusedRepresentation(std::move(out));
}

Var fuse(Var image, Var caption) {
  const Tensor& iv = image.value();
  const Tensor& cv = caption.value();
  if (!iv.same_shape(cv)) {
    throw Error(ErrorCode::kDimMismatch, "fuse: image " + iv.shape_string() + " vs caption " +
                                             cv.shape_string());
  }
  Tensor out(kFusedRows * iv.rows(), iv.cols());
  for (std::size_t s = 0; s < iv.rows(); ++s) {
    fill_rows(iv.row_span(s), cv.row_span(s), out, s * kFusedRows);
  }
  const Var inputs[] = {image, caption};
  return image.graph().emit(std::move(out), inputs, [image, caption](Graph& g, Var self) {
    const Tensor& go = g.grad(self);
    const Tensor& iv = image.value();
    const Tensor& cv = caption.value();
    const bool need_i = g.needs_grad(image);
    const bool need_c = g.needs_grad(caption);
    for (std::size_t s = 0; s < iv.rows(); ++s) {
      const std::size_t b = s * kFusedRows;
      for (std::size_t c = 0; c < iv.cols(); ++c) {
        const Real g0 = go(b, c), g1 = go(b + 1, c), g2 = go(b + 2, c), g3 = go(b + 3, c),
                   g4 = go(b + 4, c);
        if (need_i) g.grad_buffer(image)(s, c) += g0 + g1 + g2 + g3 * cv(s, c);
        if (need_c) g.grad_buffer(caption)(s, c) += g1 - g2 + g3 * iv(s, c) + g4;
      }
    }
  });
}

}  // namespace lamar::fusion
