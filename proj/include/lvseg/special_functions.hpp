#pragma once

namespace lvseg {

// Numerics backing the ANOVA / Tukey p-values. Everything here is
// cross-validated against Monte Carlo oracles in the test suite instead of
// external tables.

double lbeta(double a, double b);

// I_x(a, b), evaluated with the Lentz continued fraction.
// https://en.wikipedia.org/wiki/Beta_function#Incomplete_beta_function
double regularized_incomplete_beta(double x, double a, double b);

double normal_pdf(double x);
double normal_cdf(double x);

// Survival function of the F(d1, d2) distribution: P(F > f).
double f_survival(double f, double d1, double d2);

// CDF of the range of k i.i.d. standard normals.
double normal_range_cdf(double r, int k);

// CDF of the studentized range Q = R / S with k groups and df degrees of
// freedom (S^2 ~ chi^2_df / df, independent of R). Two-level composite
// Gauss-Legendre quadrature; absolute error well below 1e-4.
double studentized_range_cdf(double q, int k, double df);

// P(Q > q): the Tukey HSD p-value.
double studentized_range_sf(double q, int k, double df);

}  // namespace lvseg
