#pragma once

#include <algorithm>
#include <complex>
#include <string>
#include <vector>

#include "sipulse/core.hpp"

namespace sipulse {

struct SignalWindow {
    Grid samples;                           // T x R
    double sample_rate = 0.0;               // Hz
    std::vector<std::string> region_labels;  // size R
    double t_start = 0.0;                    // seconds

    int length() const { return samples.rows; }
    int regions() const { return samples.cols; }
};

inline void validate(const SignalWindow& w) {
    if (w.samples.rows < 2) throw argument_error("SignalWindow: need at least 2 samples");
    if (w.samples.cols < 1) throw argument_error("SignalWindow: need at least 1 region");
    if (w.sample_rate <= 0.0) throw argument_error("SignalWindow: sample_rate must be positive");
    if (!all_finite(w.samples)) throw numeric_error("SignalWindow: non-finite sample");
}

struct SpectrumEstimate {
    std::vector<double> power;          // length L, nonnegative
    std::vector<double> bin_freqs_bpm;  // length L, strictly increasing
    double band_lo_bpm = 42.0;
    double band_hi_bpm = 150.0;
};

// --- FIR bandpass -----------------------------------------------------------

// Windowed-sinc (Hamming) linear-phase bandpass design. Frequencies in bpm.
inline std::vector<double> design_fir_bandpass(double passband_lo_bpm, double passband_hi_bpm,
                                               int taps, double sample_rate) {
    if (taps < 3 || taps % 2 == 0) throw argument_error("fir_bandpass: taps must be odd and >= 3");
    const double nyquist_bpm = 30.0 * sample_rate;  // (fs/2) Hz in bpm
    if (!(passband_lo_bpm > 0.0) || !(passband_lo_bpm < passband_hi_bpm) ||
        !(passband_hi_bpm < nyquist_bpm))
        throw band_error("fir_bandpass: need 0 < lo < hi < Nyquist");

    const double f1 = passband_lo_bpm / 60.0 / sample_rate;  // cycles per sample
    const double f2 = passband_hi_bpm / 60.0 / sample_rate;
    const int mid = (taps - 1) / 2;
    const double pi = 3.14159265358979323846;

    auto sinc = [pi](double x) { return x == 0.0 ? 1.0 : std::sin(pi * x) / (pi * x); };

    std::vector<double> h(taps);
    for (int n = 0; n < taps; ++n) {
        const int m = n - mid;
        const double ideal = 2.0 * f2 * sinc(2.0 * f2 * m) - 2.0 * f1 * sinc(2.0 * f1 * m);
        const double window =
            taps == 1 ? 1.0 : 0.54 - 0.46 * std::cos(2.0 * pi * n / (taps - 1));
        h[n] = ideal * window;
    }
    return h;
}

// Complex frequency response of a designed filter at f_bpm.
inline std::complex<double> fir_response(const std::vector<double>& h, double f_bpm,
                                         double sample_rate) {
    const double pi = 3.14159265358979323846;
    const double omega = 2.0 * pi * (f_bpm / 60.0) / sample_rate;
    std::complex<double> acc(0.0, 0.0);
    for (size_t k = 0; k < h.size(); ++k)
        acc += h[k] * std::exp(std::complex<double>(0.0, -omega * static_cast<double>(k)));
    return acc;
}

// Per-channel zero-padded convolution with the group delay removed, so the
// output stays time-aligned with the input.
inline SignalWindow fir_bandpass(const SignalWindow& w, double passband_lo_bpm,
                                 double passband_hi_bpm, int taps) {
    validate(w);
    const std::vector<double> h = design_fir_bandpass(passband_lo_bpm, passband_hi_bpm, taps,
                                                      w.sample_rate);
    const int mid = (taps - 1) / 2;
    const int T = w.length();
    const int R = w.regions();

    SignalWindow out = w;
    for (int j = 0; j < R; ++j) {
        for (int i = 0; i < T; ++i) {
            double acc = 0.0;
            for (int k = 0; k < taps; ++k) {
                const int src = i + mid - k;
                if (src >= 0 && src < T) acc += h[k] * w.samples(src, j);
            }
            out.samples(i, j) = acc;
        }
    }
    return out;
}

// --- Power spectrum ---------------------------------------------------------

inline std::vector<double> hann_window(int n) {
    const double pi = 3.14159265358979323846;
    std::vector<double> w(n);
    for (int k = 0; k < n; ++k) w[k] = 0.5 * (1.0 - std::cos(2.0 * pi * k / (n - 1)));
    return w;
}

// Hann-window one channel, zero-pad to pad_factor*T, take the DFT and square
// the magnitude. All L bins are reported; bin frequencies in bpm.
inline SpectrumEstimate power_spectrum_channel(const std::vector<double>& x, double sample_rate,
                                               int pad_factor, double band_lo_bpm = 42.0,
                                               double band_hi_bpm = 150.0) {
    const int T = static_cast<int>(x.size());
    if (T < 2) throw argument_error("power_spectrum: need at least 2 samples");
    if (pad_factor < 1) throw argument_error("power_spectrum: pad_factor must be >= 1");

    const std::vector<double> w = hann_window(T);
    std::vector<double> xw(T);
    for (int k = 0; k < T; ++k) xw[k] = x[k] * w[k];

    const int L = pad_factor * T;
    const double pi = 3.14159265358979323846;

    SpectrumEstimate s;
    s.power.resize(L);
    s.bin_freqs_bpm.resize(L);
    s.band_lo_bpm = band_lo_bpm;
    s.band_hi_bpm = band_hi_bpm;

    // Only the first T inputs are nonzero, so the DFT is O(L*T).
    for (int m = 0; m < L; ++m) {
        const double theta = -2.0 * pi * m / L;
        const std::complex<double> step(std::cos(theta), std::sin(theta));
        std::complex<double> phase(1.0, 0.0);
        std::complex<double> acc(0.0, 0.0);
        for (int n = 0; n < T; ++n) {
            acc += xw[n] * phase;
            phase *= step;
        }
        s.power[m] = std::norm(acc);
        s.bin_freqs_bpm[m] = 60.0 * sample_rate * m / L;
    }
    return s;
}

inline std::vector<SpectrumEstimate> power_spectrum(const SignalWindow& w, int pad_factor,
                                                    double band_lo_bpm = 42.0,
                                                    double band_hi_bpm = 150.0) {
    validate(w);
    std::vector<SpectrumEstimate> out;
    out.reserve(w.regions());
    for (int j = 0; j < w.regions(); ++j) {
        std::vector<double> ch(w.length());
        for (int i = 0; i < w.length(); ++i) ch[i] = w.samples(i, j);
        out.push_back(power_spectrum_channel(ch, w.sample_rate, pad_factor, band_lo_bpm,
                                             band_hi_bpm));
    }
    return out;
}

// Sum power across all spectra and return the in-band argmax frequency.
// Ties break toward the lower frequency.
inline double estimate_pulse_rate(const std::vector<SpectrumEstimate>& spectra) {
    if (spectra.empty()) throw argument_error("estimate_pulse_rate: empty spectrum list");
    const SpectrumEstimate& ref = spectra.front();
    for (const SpectrumEstimate& s : spectra) {
        if (s.power.size() != ref.power.size() || s.bin_freqs_bpm != ref.bin_freqs_bpm ||
            s.band_lo_bpm != ref.band_lo_bpm || s.band_hi_bpm != ref.band_hi_bpm)
            throw argument_error("estimate_pulse_rate: mismatched spectrum grids");
    }

    int best = -1;
    double best_power = 0.0;
    for (size_t m = 0; m < ref.power.size(); ++m) {
        const double f = ref.bin_freqs_bpm[m];
        if (f < ref.band_lo_bpm || f > ref.band_hi_bpm) continue;
        double total = 0.0;
        for (const SpectrumEstimate& s : spectra) total += s.power[m];
        if (best < 0 || total > best_power) {
            best = static_cast<int>(m);
            best_power = total;
        }
    }
    if (best < 0) throw argument_error("estimate_pulse_rate: no bins inside the band");
    return ref.bin_freqs_bpm[best];
}

// --- Channel ratio ----------------------------------------------------------

inline std::vector<double> channel_ratio(const std::vector<double>& red,
                                         const std::vector<double>& green,
                                         double eps_g = 1e-12) {
    if (red.size() != green.size()) throw argument_error("channel_ratio: length mismatch");
    std::vector<double> out(red.size());
    for (size_t i = 0; i < red.size(); ++i) {
        if (std::abs(green[i]) <= eps_g)
            throw degenerate_error("channel_ratio: near-zero green sample at index " +
                                   std::to_string(i));
        out[i] = red[i] / green[i];
    }
    return out;
}

// --- Window extraction ------------------------------------------------------

inline std::vector<SignalWindow> extract_windows(const Grid& series, double sample_rate,
                                                 int length, int stride,
                                                 const std::vector<std::string>& labels = {}) {
    if (length > series.rows) throw argument_error("extract_windows: window longer than series");
    if (length < 2) throw argument_error("extract_windows: window too short");
    if (stride < 1) throw argument_error("extract_windows: stride must be >= 1");

    std::vector<SignalWindow> out;
    for (int off = 0; off + length <= series.rows; off += stride) {
        SignalWindow w;
        w.samples = Grid(length, series.cols);
        for (int i = 0; i < length; ++i)
            for (int j = 0; j < series.cols; ++j) w.samples(i, j) = series(off + i, j);
        w.sample_rate = sample_rate;
        w.region_labels = labels;
        w.t_start = off / sample_rate;
        out.push_back(std::move(w));
    }
    return out;
}

}  // namespace sipulse
