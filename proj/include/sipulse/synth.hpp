#pragma once

#include <vector>

#include "sipulse/core.hpp"
#include "sipulse/signals.hpp"

namespace sipulse {

// Forward-corruption family for paired dataset generation: per-region gain,
// one distractor tone per channel, baseline wander, white noise and optional
// short motion bursts.
struct SynthConfig {
    double heart_rate_lo_bpm = 48.0;
    double heart_rate_hi_bpm = 144.0;
    double harmonic_ratio = 0.25;  // second-harmonic amplitude relative to fundamental
    std::vector<double> region_gains = {1.0, 0.8, 0.6};
    double distractor_amp = 0.8;
    double distractor_freq_lo_bpm = 42.0;
    double distractor_freq_hi_bpm = 150.0;
    double noise_std = 0.3;
    double baseline_wander_amp = 0.4;
    double motion_burst_prob = 0.0;  // per-window-of-2s probability per channel
    uint64_t seed = 1;
};

inline void validate(const SynthConfig& cfg) {
    if (!(cfg.heart_rate_lo_bpm <= cfg.heart_rate_hi_bpm))
        throw argument_error("SynthConfig: heart_rate range out of order");
    if (!(cfg.distractor_freq_lo_bpm <= cfg.distractor_freq_hi_bpm))
        throw argument_error("SynthConfig: distractor_freq range out of order");
    if (cfg.harmonic_ratio < 0.0 || cfg.harmonic_ratio >= 1.0)
        throw argument_error("SynthConfig: harmonic_ratio must be in [0,1)");
    if (cfg.region_gains.empty()) throw argument_error("SynthConfig: need at least one region");
    for (double a : {cfg.distractor_amp, cfg.noise_std, cfg.baseline_wander_amp})
        if (!(a >= 0.0) || !std::isfinite(a))
            throw argument_error("SynthConfig: amplitudes must be finite and nonnegative");
    if (cfg.motion_burst_prob < 0.0 || cfg.motion_burst_prob > 1.0)
        throw argument_error("SynthConfig: motion_burst_prob must be in [0,1]");
}

// Clean pulse: unit-amplitude fundamental plus an optional second harmonic,
// with random phases.
inline std::vector<double> generate_pulse(const SynthConfig& cfg, double f_bpm, int T, double fs,
                                          Rng& rng) {
    if (f_bpm < 42.0 || f_bpm > 150.0)
        throw argument_error("generate_pulse: rate outside [42,150] bpm");
    if (T < 2) throw argument_error("generate_pulse: need at least 2 samples");

    const double pi = 3.14159265358979323846;
    std::uniform_real_distribution<double> uphase(0.0, 2.0 * pi);
    const double phi1 = uphase(rng);
    const double phi2 = uphase(rng);
    const double w = 2.0 * pi * f_bpm / 60.0 / fs;

    std::vector<double> x(T);
    for (int k = 0; k < T; ++k)
        x[k] = std::sin(w * k + phi1) + cfg.harmonic_ratio * std::sin(2.0 * w * k + phi2);
    return x;
}

// channel r = gain_r * x0 + distractor tone + baseline wander + white noise
// (+ motion burst). Every stochastic component is drawn per channel.
inline SignalWindow forward_corrupt(const std::vector<double>& x0, double fs,
                                    const SynthConfig& cfg, Rng& rng) {
    validate(cfg);
    const int T = static_cast<int>(x0.size());
    const int R = static_cast<int>(cfg.region_gains.size());
    const double pi = 3.14159265358979323846;

    SignalWindow w;
    w.samples = Grid(T, R);
    w.sample_rate = fs;
    for (int j = 0; j < R; ++j) w.region_labels.push_back("region" + std::to_string(j + 1));

    std::uniform_real_distribution<double> uphase(0.0, 2.0 * pi);
    std::uniform_real_distribution<double> ufreq(cfg.distractor_freq_lo_bpm,
                                                 cfg.distractor_freq_hi_bpm);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    const int burst_len = std::min(T, static_cast<int>(fs));  // 1 s ramp
    for (int j = 0; j < R; ++j) {
        const double df = ufreq(rng) / 60.0 / fs * 2.0 * pi;
        const double dphi = uphase(rng);
        const double wphi = uphase(rng);
        // wander below the passband, around 12 cycles/min
        const double ww = 2.0 * pi * 0.2 / fs;

        for (int i = 0; i < T; ++i) {
            double s = cfg.region_gains[j] * x0[i];
            s += cfg.distractor_amp * std::sin(df * i + dphi);
            s += cfg.baseline_wander_amp * std::sin(ww * i + wphi);
            s += cfg.noise_std * gauss(rng);
            w.samples(i, j) = s;
        }

        if (cfg.motion_burst_prob > 0.0) {
            // one chance per 2 s segment of a sharp windowed ramp
            for (int seg = 0; seg + burst_len <= T; seg += 2 * burst_len) {
                if (unit(rng) >= cfg.motion_burst_prob) continue;
                const double amp = 3.0 + 3.0 * unit(rng);
                for (int i = 0; i < burst_len; ++i) {
                    const double ramp = static_cast<double>(i) / burst_len;
                    const double hann = 0.5 * (1.0 - std::cos(2.0 * pi * i / (burst_len - 1)));
                    w.samples(seg + i, j) += amp * ramp * hann;
                }
            }
        }
    }
    return w;
}

struct SubjectTrack {
    std::string id;
    double rate_bpm = 0.0;          // ground-truth rate, constant per subject
    uint64_t seed = 0;
    std::vector<double> x0;          // clean pulse, one channel
    Grid x1;                         // corrupted measurements, T x R
};

struct Dataset {
    double fs = 25.0;
    SynthConfig cfg;
    std::vector<SubjectTrack> subjects;
};

// One x0 track and one R-channel x1 track per subject; x0 is stored once and
// replicated across channels at training time.
inline Dataset make_dataset(const SynthConfig& cfg, int n_subjects, double duration_sec,
                            double fs) {
    validate(cfg);
    if (n_subjects < 1) throw argument_error("make_dataset: need at least one subject");
    const int T = static_cast<int>(duration_sec * fs);
    if (T < 2) throw argument_error("make_dataset: duration too short");

    Dataset ds;
    ds.fs = fs;
    ds.cfg = cfg;
    for (int s = 0; s < n_subjects; ++s) {
        SubjectTrack tr;
        tr.id = "subject" + std::to_string(s + 1);
        tr.seed = cfg.seed + static_cast<uint64_t>(s);
        Rng rng = make_rng(tr.seed);
        std::uniform_real_distribution<double> urate(cfg.heart_rate_lo_bpm,
                                                     cfg.heart_rate_hi_bpm);
        tr.rate_bpm = cfg.heart_rate_lo_bpm == cfg.heart_rate_hi_bpm ? cfg.heart_rate_lo_bpm
                                                                     : urate(rng);
        tr.x0 = generate_pulse(cfg, tr.rate_bpm, T, fs, rng);
        tr.x1 = forward_corrupt(tr.x0, fs, cfg, rng).samples;
        ds.subjects.push_back(std::move(tr));
    }
    return ds;
}

// x0 replicated to R channels, matching the pairing used during training.
inline Grid replicate_channels(const std::vector<double>& x0, int from, int length, int R) {
    Grid g(length, R);
    for (int i = 0; i < length; ++i)
        for (int j = 0; j < R; ++j) g(i, j) = x0[from + i];
    return g;
}

}  // namespace sipulse
