#include "lvseg/special_functions.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace lvseg {

double lbeta(double a, double b) { return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b); }

namespace {

// Continued fraction for the incomplete beta function (modified Lentz).
double beta_cf(double x, double a, double b) {
    const double tiny = 1e-300;
    const double eps = 1e-16;
    double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 10000; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < eps) break;
    }
    return h;
}

// Gauss-Legendre nodes/weights on [-1, 1] by Newton iteration on P_n.
struct GaussLegendre {
    std::vector<double> x, w;
    explicit GaussLegendre(int n) : x(n), w(n) {
        const int m = (n + 1) / 2;
        for (int i = 0; i < m; ++i) {
            double z = std::cos(3.141592653589793 * (i + 0.75) / (n + 0.5));
            double pp = 0.0;
            for (int it = 0; it < 100; ++it) {
                double p1 = 1.0, p2 = 0.0;
                for (int j = 0; j < n; ++j) {
                    const double p3 = p2;
                    p2 = p1;
                    p1 = ((2.0 * j + 1.0) * z * p2 - j * p3) / (j + 1.0);
                }
                pp = n * (z * p1 - p2) / (z * z - 1.0);
                const double z1 = z;
                z = z1 - p1 / pp;
                if (std::abs(z - z1) < 1e-15) break;
            }
            x[i] = -z;
            x[n - 1 - i] = z;
            w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
            w[n - 1 - i] = w[i];
        }
    }
};

const GaussLegendre& gl16() {
    static const GaussLegendre g(16);
    return g;
}

// Composite 16-point Gauss-Legendre over [lo, hi] with panels of width <= h.
template <typename F>
double integrate(F&& f, double lo, double hi, double h) {
    if (hi <= lo) return 0.0;
    const auto& g = gl16();
    const int panels = std::max(1, static_cast<int>(std::ceil((hi - lo) / h)));
    const double dw = (hi - lo) / panels;
    double total = 0.0;
    for (int p = 0; p < panels; ++p) {
        const double a = lo + p * dw, half = 0.5 * dw, mid = a + half;
        double s = 0.0;
        for (int i = 0; i < 16; ++i) s += g.w[i] * f(mid + half * g.x[i]);
        total += s * half;
    }
    return total;
}

// Log density of S = sqrt(chi^2_df / df).
double log_scale_pdf(double s, double df) {
    if (s <= 0.0) return -std::numeric_limits<double>::infinity();
    const double h = 0.5 * df;
    return std::log(2.0) + h * std::log(h) - std::lgamma(h) + (df - 1.0) * std::log(s) - h * s * s;
}

}  // namespace

double regularized_incomplete_beta(double x, double a, double b) {
    if (!(a > 0.0 && b > 0.0) || std::isnan(x)) return std::numeric_limits<double>::quiet_NaN();
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double front = std::exp(a * std::log(x) + b * std::log1p(-x) - lbeta(a, b));
    if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_cf(x, a, b) / a;
    return 1.0 - std::exp(b * std::log1p(-x) + a * std::log(x) - lbeta(b, a)) * beta_cf(1.0 - x, b, a) / b;
}

double normal_pdf(double x) { return 0.3989422804014326779 * std::exp(-0.5 * x * x); }

double normal_cdf(double x) { return 0.5 * std::erfc(-x * 0.7071067811865475244); }

double f_survival(double f, double d1, double d2) {
    if (std::isnan(f)) return std::numeric_limits<double>::quiet_NaN();
    if (f <= 0.0) return 1.0;
    if (std::isinf(f)) return 0.0;
    return regularized_incomplete_beta(d2 / (d2 + d1 * f), 0.5 * d2, 0.5 * d1);
}

double normal_range_cdf(double r, int k) {
    if (r <= 0.0) return 0.0;
    if (k < 2) throw std::runtime_error("range needs k >= 2");
    // beyond r ~ 40 the bracket term equals Phi(u) to double precision and
    // the integral is exactly 1
    if (r > 40.0) return 1.0;
    // F_R(r) = k * Int phi(u) [Phi(u) - Phi(u - r)]^(k-1) du
    const double lo = -9.0, hi = 9.0 + r;
    const double val = integrate(
        [r, k](double u) {
            const double inner = normal_cdf(u) - normal_cdf(u - r);
            if (inner <= 0.0) return 0.0;
            return normal_pdf(u) * std::pow(inner, k - 1);
        },
        lo, hi, 0.5);
    return std::min(1.0, k * val);
}

double studentized_range_cdf(double q, int k, double df) {
    if (q <= 0.0) return 0.0;
    if (std::isinf(q)) return 1.0;
    if (k < 2) throw std::runtime_error("studentized range needs k >= 2");
    if (df <= 0.0) throw std::runtime_error("studentized range needs df > 0");
    if (df > 1e5) return normal_range_cdf(q, k);  // S is 1 to quadrature accuracy

    // Outer integral over the pooled-SD scale factor, restricted to where
    // the scale density carries mass (log-density within 40 nats of mode).
    const double mode = df >= 1.0 ? std::sqrt((df - 1.0 <= 0.0 ? 0.5 : df - 1.0) / df) : 0.5;
    const double log_peak = log_scale_pdf(std::max(mode, 1e-3), df);
    double s_lo = mode, s_hi = mode;
    const double step = 0.05 / std::sqrt(df) + 0.002;
    while (s_lo > 1e-9 && log_scale_pdf(s_lo, df) > log_peak - 40.0) s_lo -= step;
    s_lo = std::max(0.0, s_lo);
    while (log_scale_pdf(s_hi, df) > log_peak - 40.0) s_hi += step;

    const double val = integrate(
        [q, k, df](double s) {
            const double lp = log_scale_pdf(s, df);
            if (lp < -700.0) return 0.0;
            return std::exp(lp) * normal_range_cdf(q * s, k);
        },
        s_lo, s_hi, (s_hi - s_lo) / 48.0);
    return std::min(1.0, val);
}

double studentized_range_sf(double q, int k, double df) {
    return std::max(0.0, 1.0 - studentized_range_cdf(q, k, df));
}

}  // namespace lvseg
