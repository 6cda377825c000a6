#pragma once

#include <cmath>
#include <cstdint>

#include "nestiv/data.hpp"
#include "nestiv/rng.hpp"

namespace nestiv {

// Synthetic screening-trial benchmark used by the integration and acceptance
// suites. Two randomization strata with very different on-protocol uptake
// (roughly 53 and 85 points of adjusted compliance), a person-year exposure
// offset, a Poisson count outcome, and one homogeneous treatment effect, so
// the homogeneity tests should usually stand down. Uptake on the b side leans
// male while a-side uptake leans away from it, which makes the switcher group
// noticeably more male than the always-compliers.
//
// Covariate order: age, male, white, finished high school, finished college,
// former smoker, current smoker, body mass index.
inline ObservationTable screening_trial_fixture(int n, std::uint64_t seed) {
  Rng rng(seed, "screening", 0);
  ObservationTable t;
  t.x.resize(n, 8);
  t.z.resize(n);
  t.d.resize(n);
  t.y.resize(n);
  t.offset.resize(n);
  const auto expit = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  for (int i = 0; i < n; ++i) {
    const double age = 55.0 + 20.0 * rng.uniform();
    const double male = rng.bernoulli(0.5) ? 1.0 : 0.0;
    const double white = rng.bernoulli(0.85) ? 1.0 : 0.0;
    const double edu_draw = rng.uniform();
    const double edu_hs = edu_draw < 0.4 ? 1.0 : 0.0;
    const double edu_col = edu_draw >= 0.7 ? 1.0 : 0.0;
    const double smoke_draw = rng.uniform();
    const double smoke_former = (smoke_draw >= 0.45 && smoke_draw < 0.8) ? 1.0 : 0.0;
    const double smoke_current = smoke_draw >= 0.8 ? 1.0 : 0.0;
    const double bmi = rng.normal(27.0, 4.5);
    t.x.row(i) << age, male, white, edu_hs, edu_col, smoke_former, smoke_current, bmi;

    const bool side_b =
        rng.bernoulli(expit(-0.1 + 0.015 * (age - 65.0) + 0.25 * male - 0.1 * white));
    const bool active = rng.bernoulli(0.5);
    t.z[i] = make_code(side_b, active);

    double p_take = 0.0;
    if (!side_b) {
      p_take = active ? expit(0.59 + 0.015 * (age - 65.0) - 0.55 * male +
                              0.2 * white + 0.1 * edu_col)
                      : expit(-2.2 + 0.01 * (age - 65.0));
    } else {
      p_take = active ? expit(1.79 + 0.01 * (age - 65.0) + 0.8 * male + 0.1 * white)
                      : expit(-2.9 + 0.01 * (age - 65.0));
    }
    t.d[i] = rng.bernoulli(p_take) ? 1.0 : 0.0;

    t.offset[i] = 5.0 + 8.0 * rng.uniform();
    const double log_rate = -3.4 + 0.012 * (age - 65.0) + 0.3 * smoke_current +
                            0.12 * smoke_former + 0.008 * (bmi - 27.0) -
                            0.18 * t.d[i];
    t.y[i] = static_cast<double>(rng.poisson(t.offset[i] * std::exp(log_rate)));
  }
  return t;
}

}  // namespace nestiv
