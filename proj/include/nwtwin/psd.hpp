#pragma once

// Welch spectral estimation on a small in-place radix-2 FFT. One-sided
// PSD normalized so that sum(psd) * df = variance (Hann window, 50%
// overlap).

#include <cmath>
#include <complex>
#include <stdexcept>
#include <vector>

#include "nwtwin/constants.hpp"

namespace nwtwin::psd {

inline void fft_radix2(std::vector<std::complex<double>>& a) {
    const std::size_t n = a.size();
    if (n == 0 || (n & (n - 1)) != 0)
        throw std::invalid_argument("fft_radix2: length must be a power of two");
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = -constants::two_pi / double(len);
        const std::complex<double> wlen(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const auto u = a[i + k];
                const auto v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
}

struct Spectrum {
    std::vector<double> frequency; // Hz
    std::vector<double> power;     // units^2 / Hz, one-sided
    int averages = 0;
};

inline Spectrum welch(const std::vector<double>& x, double sample_rate, std::size_t segment,
                      double overlap = 0.5) {
    if (segment == 0 || (segment & (segment - 1)) != 0)
        throw std::invalid_argument("welch: segment must be a power of two");
    if (x.size() < segment) throw std::invalid_argument("welch: trace shorter than one segment");

    std::vector<double> window(segment);
    double w2 = 0.0;
    for (std::size_t i = 0; i < segment; ++i) {
        window[i] = 0.5 * (1.0 - std::cos(constants::two_pi * i / segment));
        w2 += window[i] * window[i];
    }

    const std::size_t hop = std::max<std::size_t>(1, std::size_t(segment * (1.0 - overlap)));
    Spectrum out;
    out.frequency.resize(segment / 2 + 1);
    out.power.assign(segment / 2 + 1, 0.0);
    for (std::size_t i = 0; i <= segment / 2; ++i)
        out.frequency[i] = double(i) * sample_rate / double(segment);

    std::vector<std::complex<double>> buf(segment);
    for (std::size_t start = 0; start + segment <= x.size(); start += hop) {
        for (std::size_t i = 0; i < segment; ++i) buf[i] = x[start + i] * window[i];
        fft_radix2(buf);
        for (std::size_t i = 0; i <= segment / 2; ++i) {
            const double scale = (i == 0 || i == segment / 2) ? 1.0 : 2.0;
            out.power[i] += scale * std::norm(buf[i]) / (sample_rate * w2);
        }
        ++out.averages;
    }
    if (out.averages == 0) throw std::runtime_error("welch: no segments");
    for (auto& p : out.power) p /= out.averages;
    return out;
}

} // namespace nwtwin::psd
