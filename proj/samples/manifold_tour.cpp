// Builds a synthetic flamelet table, then compares global PCA, VQPCA and NMF on it.

#include <cstdio>

#include "eldm/eldm.hpp"

using namespace eldm;

int main() {
  SyntheticSpec spec;
  spec.n_points = 4000;
  spec.noise_level = 0.01;
  const SyntheticData data = generate(spec);
  const StateMatrix& x = data.state;

  const PcaBasis pca = fit_pca(x, Scaling::range);
  const Matrix xt = apply_preprocessor(x, pca.preprocessor);
  const Vector ev = explained_variance(pca);
  for (Index q = 1; q <= 3; ++q) {
    const auto rep = report_errors(x.values(), reconstruct(transform(xt, pca, q), pca));
    std::printf("PCA   q=%ld  explained %.4f  mean R2 %.4f\n", static_cast<long>(q), ev(q - 1), rep.r2_summary.mean);
  }
  const Vector pc1 = transform(xt, pca, 1).values.col(0);
  std::printf("corr(PC1, Z) = %.4f\n", correlation(pc1, data.mixture_fraction));

  for (Index k : {2, 4, 8}) {
    VqpcaOptions opt;
    opt.k = k;
    opt.q = 2;
    opt.init = VqpcaInit::kmeans;
    const auto r = vqpca(xt, opt);
    const auto rep = report_errors(x.values(), invert_preprocessor(local_reconstruct_scaled(xt, r.partition), pca.preprocessor));
    std::printf("VQPCA k=%ld  iterations %d  mean R2 %.4f\n", static_cast<long>(k), r.iterations, rep.r2_summary.mean);
  }

  const Preprocessor nonneg = fit_preprocessor(x.values(), Scaling::range, Centering::minimum);
  const NmfFactors nmf = fit_nmf(apply_preprocessor(x, nonneg), 2, 0);
  std::printf("NMF q=2  residual %.4f  corr(W1, Z) %.4f  corr(W2, Z) %.4f\n", nmf.residual_history.back(),
              correlation(nmf.w.col(0), data.mixture_fraction), correlation(nmf.w.col(1), data.mixture_fraction));
  return 0;
}
