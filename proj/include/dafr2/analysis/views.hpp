#pragma once

#include <Eigen/Dense>

#include "dafr2/nn/covariance.hpp"
#include "dafr2/trainer/trainer.hpp"

namespace dafr2 {

/// An extractor paired with the head that reads it. The analyses compare a
/// source-only model (baseline f_s + g_s) against the adapted one (f_t + g_s).
struct ModelView {
  nn::FeatureExtractor<float>* f = nullptr;
  nn::ClassifierHead<float>* g = nullptr;

  Tensor<float> embed(const Tensor<float>& images) const { return extract_features(*f, images); }
  Tensor<float> logits(const Tensor<float>& images) const { return g->forward(embed(images)); }
};

inline ModelView view_of(Bundle& b, Route route) { return {&route_extractor(b, route), &b.g_s}; }

/// Pick the view for a route from the two trained bundles: the baseline route
/// reads the source-only bundle, the adapted route reads f_t of the adapted one.
inline ModelView route_view(Bundle& baseline, Bundle& adapted, Route route) {
  return route == Route::baseline ? view_of(baseline, Route::baseline) : view_of(adapted, Route::adapted);
}

inline Eigen::MatrixXd embed_matrix(const ModelView& v, const Tensor<float>& images) { return nn::to_matrix(v.embed(images)); }

}  // namespace dafr2
