#include "matrix.hpp"

#include <algorithm>
#include <cmath>

namespace kfarm {

Matrix build_fill(std::int64_t n, double diag, double off) {
    if (n <= 0)
        throw Error(Errc::bad_value, "build_fill: order must be positive");
    auto un = static_cast<std::size_t>(n);
    Matrix m(un, un);
    for (std::size_t i = 0; i < un; ++i)
        for (std::size_t j = 0; j < un; ++j)
            m.at(i, j) = (i == j) ? diag : off;
    return m;
}

Matrix build_tridiag(std::int64_t n, double diag, double upper, double lower) {
    if (n <= 0)
        throw Error(Errc::bad_value, "build_tridiag: order must be positive");
    auto un = static_cast<std::size_t>(n);
    Matrix m(un, un);
    for (std::size_t i = 0; i < un; ++i) {
        m.at(i, i) = diag;
        if (i + 1 < un) {
            m.at(i, i + 1) = upper;
            m.at(i + 1, i) = lower;
        }
    }
    return m;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows())
        throw Error(Errc::bad_value,
                    "matmul: inner dimensions differ (" +
                        std::to_string(a.cols()) + " vs " +
                        std::to_string(b.rows()) + ")");
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t k = 0; k < a.cols(); ++k) {
            double aik = a.at(i, k);
            if (aik == 0.0)
                continue;
            for (std::size_t j = 0; j < b.cols(); ++j)
                c.at(i, j) += aik * b.at(k, j);
        }
    return c;
}

// ------------------------------------------------------------- eigensolver

namespace {

inline double sign_of(double a, double b) {
    double x = std::fabs(a);
    return b >= 0 ? x : -x;
}

// Householder similarity reduction to upper Hessenberg form, in place.
void hessenberg_reduce(std::vector<std::vector<double>>& h) {
    const std::size_t n = h.size();
    if (n < 3)
        return;
    std::vector<double> ort(n, 0.0);
    for (std::size_t m = 1; m + 1 < n; ++m) {
        double scale = 0.0;
        for (std::size_t i = m; i < n; ++i)
            scale += std::fabs(h[i][m - 1]);
        if (scale == 0.0)
            continue;
        double hsum = 0.0;
        for (std::size_t i = n; i-- > m;) {
            ort[i] = h[i][m - 1] / scale;
            hsum += ort[i] * ort[i];
        }
        double g = -sign_of(std::sqrt(hsum), ort[m]);
        hsum -= ort[m] * g;
        ort[m] -= g;

        // apply I - (ort*ort^T)/hsum from both sides
        for (std::size_t j = m; j < n; ++j) {
            double f = 0.0;
            for (std::size_t i = n; i-- > m;)
                f += ort[i] * h[i][j];
            f /= hsum;
            for (std::size_t i = m; i < n; ++i)
                h[i][j] -= f * ort[i];
        }
        for (std::size_t i = 0; i < n; ++i) {
            double f = 0.0;
            for (std::size_t j = n; j-- > m;)
                f += ort[j] * h[i][j];
            f /= hsum;
            for (std::size_t j = m; j < n; ++j)
                h[i][j] -= f * ort[j];
        }
        h[m][m - 1] = scale * g;
        for (std::size_t i = m + 1; i < n; ++i)
            h[i][m - 1] = 0.0;
    }
}

// Shifted QR with deflation on an upper Hessenberg matrix, eigenvalues only.
// The shift pair comes from the trailing 2x2 block; trailing 2x2 blocks are
// resolved by the quadratic formula, which is where complex conjugate pairs
// are produced.
void hqr_eigenvalues(std::vector<std::vector<double>>& h,
                     std::vector<double>& wr, std::vector<double>& wi,
                     long iteration_cap) {
    const int n = static_cast<int>(h.size());
    const int low = 0;
    const int high = n - 1;

    double norm = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = std::max(i - 1, 0); j < n; ++j)
            norm += std::fabs(h[i][j]);

    int en = high;
    double t = 0.0;
    long itn = iteration_cap;
    double p = 0, q = 0, r = 0, s = 0, w = 0, x = 0, y = 0, zz = 0;

    while (en >= low) {
        int its = 0;
        int na = en - 1;
        int enm2 = na - 1;

        for (;;) {
            // look for a single small subdiagonal element
            int l;
            for (l = en; l > low; --l) {
                s = std::fabs(h[l - 1][l - 1]) + std::fabs(h[l][l]);
                if (s == 0.0)
                    s = norm;
                if (s + std::fabs(h[l][l - 1]) == s)
                    break;
            }

            x = h[en][en];
            if (l == en) {
                // one root found
                wr[en] = x + t;
                wi[en] = 0.0;
                en = na;
                break;
            }
            y = h[na][na];
            w = h[en][na] * h[na][en];
            if (l == na) {
                // trailing 2x2 block: quadratic formula
                p = (y - x) / 2.0;
                q = p * p + w;
                zz = std::sqrt(std::fabs(q));
                x += t;
                if (q >= 0) {
                    zz = p + sign_of(zz, p);
                    wr[na] = x + zz;
                    wr[en] = (zz != 0.0) ? x - w / zz : wr[na];
                    wi[na] = 0.0;
                    wi[en] = 0.0;
                } else {
                    wr[na] = x + p;
                    wr[en] = x + p;
                    wi[na] = zz;
                    wi[en] = -zz;
                }
                en = enm2;
                break;
            }

            if (itn == 0)
                throw Error(Errc::bad_value,
                            "eigenvalues: QR iteration did not converge "
                            "within the iteration cap");
            if (its == 10 || its == 20) {
                // exceptional shift
                t += x;
                for (int i = low; i <= en; ++i)
                    h[i][i] -= x;
                s = std::fabs(h[en][na]) + std::fabs(h[na][enm2]);
                x = y = 0.75 * s;
                w = -0.4375 * s * s;
            }
            ++its;
            --itn;

            // look for two consecutive small subdiagonal elements
            int m;
            for (m = enm2; m >= l; --m) {
                zz = h[m][m];
                r = x - zz;
                s = y - zz;
                p = (r * s - w) / h[m + 1][m] + h[m][m + 1];
                q = h[m + 1][m + 1] - zz - r - s;
                r = h[m + 2][m + 1];
                s = std::fabs(p) + std::fabs(q) + std::fabs(r);
                p /= s;
                q /= s;
                r /= s;
                if (m == l)
                    break;
                double tst1 = std::fabs(p) * (std::fabs(h[m - 1][m - 1]) +
                                              std::fabs(zz) +
                                              std::fabs(h[m + 1][m + 1]));
                if (tst1 + std::fabs(h[m][m - 1]) * (std::fabs(q) + std::fabs(r)) == tst1)
                    break;
            }
            for (int i = m + 2; i <= en; ++i) {
                h[i][i - 2] = 0.0;
                if (i != m + 2)
                    h[i][i - 3] = 0.0;
            }

            // double QR step on rows l..en, columns m..en
            for (int k = m; k <= na; ++k) {
                bool notlast = (k != na);
                if (k != m) {
                    p = h[k][k - 1];
                    q = h[k + 1][k - 1];
                    r = notlast ? h[k + 2][k - 1] : 0.0;
                    x = std::fabs(p) + std::fabs(q) + std::fabs(r);
                    if (x == 0.0)
                        continue;
                    p /= x;
                    q /= x;
                    r /= x;
                }
                s = sign_of(std::sqrt(p * p + q * q + r * r), p);
                if (k != m)
                    h[k][k - 1] = -s * x;
                else if (l != m)
                    h[k][k - 1] = -h[k][k - 1];
                p += s;
                x = p / s;
                y = q / s;
                zz = r / s;
                q /= p;
                r /= p;

                if (!notlast) {
                    for (int j = k; j <= en; ++j) {
                        double f = h[k][j] + q * h[k + 1][j];
                        h[k][j] -= f * x;
                        h[k + 1][j] -= f * y;
                    }
                    int jmax = std::min(en, k + 3);
                    for (int i = l; i <= jmax; ++i) {
                        double f = x * h[i][k] + y * h[i][k + 1];
                        h[i][k] -= f;
                        h[i][k + 1] -= f * q;
                    }
                } else {
                    for (int j = k; j <= en; ++j) {
                        double f = h[k][j] + q * h[k + 1][j] + r * h[k + 2][j];
                        h[k][j] -= f * x;
                        h[k + 1][j] -= f * y;
                        h[k + 2][j] -= f * zz;
                    }
                    int jmax = std::min(en, k + 3);
                    for (int i = l; i <= jmax; ++i) {
                        double f = x * h[i][k] + y * h[i][k + 1] + zz * h[i][k + 2];
                        h[i][k] -= f;
                        h[i][k + 1] -= f * q;
                        h[i][k + 2] -= f * r;
                    }
                }
            }
        }
    }
}

} // namespace

Spectrum eigenvalues(const Matrix& a) {
    if (a.rows() != a.cols())
        throw Error(Errc::bad_value, "eigenvalues: matrix is not square");
    const std::size_t n = a.rows();

    std::vector<std::vector<double>> h(n, std::vector<double>(n));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            h[i][j] = a.at(i, j);

    std::vector<double> wr(n, 0.0), wi(n, 0.0);
    if (n == 1) {
        wr[0] = h[0][0];
    } else {
        hessenberg_reduce(h);
        hqr_eigenvalues(h, wr, wi, 100L * static_cast<long>(n));
    }

    Spectrum spec;
    spec.eigenvalues.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        spec.eigenvalues.emplace_back(wr[i], wi[i]);
    std::sort(spec.eigenvalues.begin(), spec.eigenvalues.end(),
              [](const std::complex<double>& p, const std::complex<double>& q) {
                  double mp = std::abs(p), mq = std::abs(q);
                  if (mp != mq)
                      return mp > mq;
                  if (p.real() != q.real())
                      return p.real() > q.real();
                  return p.imag() > q.imag();
              });
    return spec;
}

// --------------------------------------------------------- value bridging

Value matrix_to_value(const Matrix& m) {
    Value::List rows;
    rows.reserve(m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        Value::List row;
        row.reserve(m.cols());
        for (std::size_t j = 0; j < m.cols(); ++j)
            row.push_back(Value::real(m.at(i, j)));
        rows.push_back(Value::list(std::move(row)));
    }
    return Value::list(std::move(rows));
}

Matrix matrix_from_value(const Value& v) {
    if (!is_matrix_value(v))
        throw Error(Errc::bad_value,
                    "expected a matrix (list of equal-length numeric rows)");
    const auto& rows = v.as_list();
    Matrix m(rows.size(), rows[0].as_list().size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& row = rows[i].as_list();
        for (std::size_t j = 0; j < row.size(); ++j)
            m.at(i, j) = row[j].number();
    }
    return m;
}

Value spectrum_to_value(const Spectrum& s) {
    Value::List out;
    out.reserve(s.eigenvalues.size());
    for (const auto& ev : s.eigenvalues) {
        if (ev.imag() == 0.0)
            out.push_back(Value::real(ev.real()));
        else
            out.push_back(Value::list(
                {Value::real(ev.real()), Value::real(ev.imag())}));
    }
    return Value::list(std::move(out));
}

} // namespace kfarm
