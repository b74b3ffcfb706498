// Command-line front end: generate | train | sample | evaluate | gauge | ablate.
// Exit codes: 0 ok, 2 config/input error, 3 numeric divergence, 4 integrity
// failure.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <set>

#include <CLI11.hpp>

#include "sipulse/gauge.hpp"
#include "sipulse/io.hpp"
#include "sipulse/sampler.hpp"
#include "sipulse/signals.hpp"
#include "sipulse/synth.hpp"
#include "sipulse/training.hpp"
#include "sipulse/uq.hpp"

namespace fs = std::filesystem;
using namespace sipulse;

namespace {

std::string out_root() {
    const char* env = std::getenv("SIPULSE_OUT_ROOT");
    return env && *env ? env : ".";
}

std::string resolve_out(const std::string& out, const std::string& fallback_name) {
    if (!out.empty()) return out;
    return (fs::path(out_root()) / fallback_name).string();
}

json toml_echo(const TomlMap& m) {
    json j = json::object();
    for (const auto& [key, val] : m) {
        if (std::holds_alternative<double>(val))
            j[key] = std::get<double>(val);
        else if (std::holds_alternative<bool>(val))
            j[key] = std::get<bool>(val);
        else if (std::holds_alternative<std::string>(val))
            j[key] = std::get<std::string>(val);
        else
            j[key] = std::get<std::vector<double>>(val);
    }
    return j;
}

int toml_int(const TomlMap& m, const std::string& key, int fallback) {
    return static_cast<int>(std::lround(toml_num(m, key, fallback)));
}

// --- generate ---------------------------------------------------------------

int cmd_generate(const std::string& config_path, const std::string& out) {
    const TomlMap cfg = read_toml(config_path);

    SynthConfig sc;
    const auto hr = toml_arr(cfg, "synth.heart_rate", {sc.heart_rate_lo_bpm, sc.heart_rate_hi_bpm});
    if (hr.size() != 2) throw argument_error("synth.heart_rate: expected [lo, hi]");
    sc.heart_rate_lo_bpm = hr[0];
    sc.heart_rate_hi_bpm = hr[1];
    sc.harmonic_ratio = toml_num(cfg, "synth.harmonic_ratio", sc.harmonic_ratio);
    sc.region_gains = toml_arr(cfg, "synth.region_gains", sc.region_gains);
    sc.distractor_amp = toml_num(cfg, "synth.distractor_amp", sc.distractor_amp);
    const auto df = toml_arr(cfg, "synth.distractor_freq",
                             {sc.distractor_freq_lo_bpm, sc.distractor_freq_hi_bpm});
    if (df.size() != 2) throw argument_error("synth.distractor_freq: expected [lo, hi]");
    sc.distractor_freq_lo_bpm = df[0];
    sc.distractor_freq_hi_bpm = df[1];
    sc.noise_std = toml_num(cfg, "synth.noise_std", sc.noise_std);
    sc.baseline_wander_amp = toml_num(cfg, "synth.baseline_wander_amp", sc.baseline_wander_amp);
    sc.motion_burst_prob = toml_num(cfg, "synth.motion_burst_prob", sc.motion_burst_prob);
    sc.seed = static_cast<uint64_t>(toml_num(cfg, "dataset.seed", 1.0));

    const int subjects = toml_int(cfg, "dataset.subjects", 3);
    const double duration = toml_num(cfg, "dataset.duration", 20.0);
    const double fsr = toml_num(cfg, "dataset.fs", 25.0);
    if (!(fsr > 0.0)) throw argument_error("dataset.fs: must be positive");

    const Dataset ds = make_dataset(sc, subjects, duration, fsr);

    fs::create_directories(out);
    json subj_list = json::array();
    for (const SubjectTrack& tr : ds.subjects) {
        const std::string clean = tr.id + "_clean.csv";
        const std::string measured = tr.id + "_measured.csv";
        Grid x0(static_cast<int>(tr.x0.size()), 1);
        x0.v = tr.x0;
        write_series_csv((fs::path(out) / clean).string(), x0, fsr, {"pulse"});
        std::vector<std::string> labels;
        for (int j = 0; j < tr.x1.cols; ++j) labels.push_back("region" + std::to_string(j + 1));
        write_series_csv((fs::path(out) / measured).string(), tr.x1, fsr, labels);
        subj_list.push_back({{"id", tr.id},
                             {"rate_bpm", tr.rate_bpm},
                             {"seed", tr.seed},
                             {"clean", clean},
                             {"measured", measured}});
    }
    write_manifest((fs::path(out) / "manifest.json").string(), "generate", toml_echo(cfg),
                   {{"subjects", subj_list}, {"sample_rate", fsr}});
    std::cout << "wrote " << subjects << " paired tracks to " << out << "\n";
    return 0;
}

// --- train ------------------------------------------------------------------

Dataset load_dataset(const std::string& dir) {
    const std::string manifest_path = (fs::path(dir) / "manifest.json").string();
    std::ifstream f(manifest_path);
    if (!f) throw argument_error("dataset manifest not found: " + manifest_path);
    json m;
    try {
        f >> m;
    } catch (const json::exception& e) {
        throw argument_error(std::string("dataset manifest parse failure: ") + e.what());
    }

    Dataset ds;
    ds.fs = m.at("sample_rate").get<double>();
    for (const json& s : m.at("subjects")) {
        SubjectTrack tr;
        tr.id = s.at("id").get<std::string>();
        tr.rate_bpm = s.at("rate_bpm").get<double>();
        tr.seed = s.at("seed").get<uint64_t>();
        const SeriesCsv clean =
            read_series_csv((fs::path(dir) / s.at("clean").get<std::string>()).string());
        const SeriesCsv measured =
            read_series_csv((fs::path(dir) / s.at("measured").get<std::string>()).string());
        if (clean.samples.cols != 1)
            throw argument_error("clean track must be single-channel: " + tr.id);
        if (measured.samples.rows != clean.samples.rows)
            throw argument_error("clean/measured length mismatch: " + tr.id);
        tr.x0.assign(clean.samples.v.begin(), clean.samples.v.end());
        tr.x1 = measured.samples;
        ds.subjects.push_back(std::move(tr));
    }
    if (ds.subjects.empty()) throw argument_error("dataset has no subjects");
    return ds;
}

int cmd_train(const std::string& config_path, const std::string& dataset_dir,
              const std::string& out, double lambda_override, double delta_override,
              const std::string& resume_path) {
    const TomlMap cfg = read_toml(config_path);
    const Dataset ds = load_dataset(dataset_dir);

    TrainConfig tc;
    tc.lambda_rcl = lambda_override >= 0.0 ? lambda_override
                                           : toml_num(cfg, "train.lambda_rcl", tc.lambda_rcl);
    tc.delta_shift_sec = delta_override >= 0.0
                             ? delta_override
                             : toml_num(cfg, "train.delta_shift", tc.delta_shift_sec);
    tc.batch_size = toml_int(cfg, "train.batch_size", tc.batch_size);
    tc.epochs = toml_int(cfg, "train.epochs", tc.epochs);
    tc.lr = toml_num(cfg, "train.lr", tc.lr);
    tc.seed = static_cast<uint64_t>(toml_num(cfg, "train.seed", 0.0));
    tc.window_length = toml_int(cfg, "train.window_length", tc.window_length);
    tc.stride = toml_int(cfg, "train.stride", tc.stride);
    tc.val_fraction = toml_num(cfg, "train.val_fraction", tc.val_fraction);
    tc.steps_per_epoch = toml_int(cfg, "train.steps_per_epoch", tc.steps_per_epoch);

    NetConfig net;
    net.channels = ds.subjects.front().x1.cols;
    net.hidden = toml_int(cfg, "net.hidden", net.hidden);
    net.kernel = toml_int(cfg, "net.kernel", net.kernel);
    net.blocks = toml_int(cfg, "net.blocks", net.blocks);
    net.time_dim = toml_int(cfg, "net.time_dim", net.time_dim);

    TrainResult resume;
    const TrainResult* resume_ptr = nullptr;
    if (!resume_path.empty()) {
        const Checkpoint ck = read_checkpoint(resume_path);
        if (!(ck.net == net))
            throw argument_error("resume checkpoint architecture does not match config");
        resume.params_v = ck.params_v;
        resume.params_n = ck.params_n;
        resume.adam_v = ck.adam_v;
        resume.adam_n = ck.adam_n;
        resume.best_val = std::numeric_limits<double>::infinity();
        resume_ptr = &resume;
    }

    const TrainResult res = train(ds, tc, net, resume_ptr);

    fs::create_directories(out);
    Checkpoint ck;
    ck.net = net;
    ck.fs = ds.fs;
    ck.params_v = res.params_v;
    ck.params_n = res.params_n;
    ck.adam_v = res.adam_v;
    ck.adam_n = res.adam_n;
    ck.train_config = {{"lambda_rcl", tc.lambda_rcl},     {"delta_shift", tc.delta_shift_sec},
                       {"batch_size", tc.batch_size},     {"epochs", tc.epochs},
                       {"lr", tc.lr},                     {"seed", tc.seed},
                       {"window_length", tc.window_length}, {"stride", tc.stride},
                       {"steps_per_epoch", tc.steps_per_epoch}};
    const std::string ck_path = (fs::path(out) / "checkpoint.json").string();
    write_checkpoint(ck_path, ck);

    // best-validation snapshot alongside the final state
    Checkpoint best = ck;
    best.params_v = res.best_params_v;
    best.params_n = res.best_params_n;
    const std::string best_path = (fs::path(out) / "checkpoint_best.json").string();
    write_checkpoint(best_path, best);

    std::vector<std::vector<double>> rows;
    for (const CurveRow& r : res.curves)
        rows.push_back({static_cast<double>(r.step), r.flow, r.score, r.rcl, r.total, r.val_total});
    write_csv((fs::path(out) / "curves.csv").string(),
              {"step", "flow", "score", "rcl", "total", "val_total"}, rows);

    json echo = toml_echo(cfg);
    echo["train.lambda_rcl"] = tc.lambda_rcl;
    echo["train.delta_shift"] = tc.delta_shift_sec;
    write_manifest((fs::path(out) / "manifest.json").string(), "train", echo,
                   {{"dataset", dataset_dir},
                    {"checkpoint", ck_path},
                    {"checkpoint_hash", checkpoint_hash(ck_path)},
                    {"best_checkpoint", best_path},
                    {"best_val", res.best_val},
                    {"best_step", res.best_step},
                    {"final_step", res.adam_v.step}});
    std::cout << "trained " << res.adam_v.step << " steps, best val " << res.best_val << "\n";
    return 0;
}

// --- sample -----------------------------------------------------------------

std::vector<double> parse_snapshots(const std::string& spec, double step) {
    std::vector<double> snaps;
    if (spec.empty()) return snaps;
    const size_t dots = spec.find("..");
    if (dots != std::string::npos) {
        const double lo = std::strtod(spec.substr(0, dots).c_str(), nullptr);
        const double hi = std::strtod(spec.substr(dots + 2).c_str(), nullptr);
        if (!(step > 0.0)) throw argument_error("--snapshot-step must be positive with a range");
        if (!(lo <= hi)) throw argument_error("--snapshots: range out of order");
        for (double t = lo; t <= hi + 1e-9; t += step) snaps.push_back(t);
    } else {
        std::stringstream ss(spec);
        std::string item;
        while (std::getline(ss, item, ',')) snaps.push_back(std::strtod(item.c_str(), nullptr));
    }
    for (double t : snaps)
        if (!(t >= 0.0 && t <= 1.0)) throw argument_error("--snapshots: values must lie in [0,1]");
    // record from late to early interpolation time, matching integration order
    std::sort(snaps.rbegin(), snaps.rend());
    return snaps;
}

int cmd_sample(const std::string& ck_path, const std::string& input_path, const std::string& out,
               int n, uint64_t seed, int steps, double epsilon, double t_clamp, int jobs,
               const std::string& snapshots, double snapshot_step, const std::string& form) {
    const Checkpoint ck = read_checkpoint(ck_path);
    const SeriesCsv input = read_series_csv(input_path);
    if (input.samples.cols != ck.net.channels)
        throw argument_error("input has " + std::to_string(input.samples.cols) +
                             " channels but the checkpoint expects " +
                             std::to_string(ck.net.channels));

    SamplerConfig sc;
    sc.epsilon = epsilon;
    sc.steps = steps;
    sc.t_clamp = t_clamp;
    sc.n_realizations = n;
    sc.seed = seed;
    sc.snapshot_times = parse_snapshots(snapshots, snapshot_step);
    if (form == "consistent")
        sc.form = DriftForm::Consistent;
    else if (form == "alternative")
        sc.form = DriftForm::Alternative;
    else
        throw argument_error("--drift-form must be 'consistent' or 'alternative'");
    validate(sc);

    const NetField field(ck.net, ck.params_v, ck.params_n);
    const std::vector<Trajectory> ens = ensemble(input.samples, field, sc, seed, jobs);

    fs::create_directories(out);
    json rec_list = json::array();
    for (size_t k = 0; k < ens.size(); ++k) {
        char name[32];
        std::snprintf(name, sizeof(name), "rec_%04zu.csv", k);
        write_series_csv((fs::path(out) / name).string(), ens[k].terminal, input.fs, input.labels);
        rec_list.push_back(name);
    }

    json snap_list = json::array();
    for (size_t j = 0; j < sc.snapshot_times.size(); ++j) {
        // ensemble mean state at this snapshot
        Grid mean(input.samples.rows, input.samples.cols);
        for (const Trajectory& tr : ens)
            for (size_t i = 0; i < mean.v.size(); ++i)
                mean.v[i] += tr.states.at(j).v[i] / static_cast<double>(ens.size());
        char name[48];
        std::snprintf(name, sizeof(name), "snapshot_%02zu.csv", j);
        write_series_csv((fs::path(out) / name).string(), mean, input.fs, input.labels);
        snap_list.push_back({{"file", name}, {"t", sc.snapshot_times[j]}});
    }

    write_manifest((fs::path(out) / "manifest.json").string(), "sample",
                   {{"checkpoint", ck_path},
                    {"input", input_path},
                    {"n", n},
                    {"seed", seed},
                    {"steps", steps},
                    {"epsilon", epsilon},
                    {"t_clamp", t_clamp},
                    {"jobs", jobs},
                    {"drift_form", form}},
                   {{"checkpoint_hash", checkpoint_hash(ck_path)},
                    {"realizations", rec_list},
                    {"snapshots", snap_list}});
    std::cout << "wrote " << ens.size() << " reconstructions to " << out << "\n";
    return 0;
}

// --- evaluate ---------------------------------------------------------------

void write_gauge_csv(const std::string& path, const GaugeResult& g) {
    std::ofstream f(path);
    if (!f) throw argument_error("cannot open for writing: " + path);
    f << "Source,Variance,PctVariance\n";
    f << "Repeatability," << fmt_double(g.repeatability) << "," << fmt_double(g.repeatability_pct)
      << "\n";
    f << "Reproducibility," << fmt_double(g.reproducibility) << ","
      << fmt_double(g.reproducibility_pct) << "\n";
    f << "Operator," << fmt_double(g.operator_var) << "," << fmt_double(g.operator_pct) << "\n";
    f << "Part," << fmt_double(g.part_var) << "," << fmt_double(g.part_pct) << "\n";
}

int cmd_evaluate(const std::string& ensemble_dir, const std::string& gt_path,
                 const std::string& out, double band_lo, double band_hi, int pad) {
    std::vector<std::string> rec_files;
    for (const auto& entry : fs::directory_iterator(ensemble_dir)) {
        const std::string name = entry.path().filename().string();
        if (name.rfind("rec_", 0) == 0 && name.size() > 4 &&
            name.substr(name.size() - 4) == ".csv")
            rec_files.push_back(entry.path().string());
    }
    std::sort(rec_files.begin(), rec_files.end());
    if (rec_files.empty())
        throw argument_error("no rec_*.csv reconstructions found in " + ensemble_dir);

    const SeriesCsv gt = read_series_csv(gt_path);
    if (gt.samples.cols != 1) throw argument_error("ground truth must be single-channel");

    const int N = static_cast<int>(rec_files.size());
    std::vector<double> rates(N);
    std::vector<std::vector<double>> summed(N);  // per-realization region-summed power
    std::vector<SpectrumEstimate> first_spectra;
    int regions = 0;

    // per-(bin, region, realization) powers for the gauge table
    std::vector<std::vector<std::vector<double>>> region_power;

    for (int k = 0; k < N; ++k) {
        const SeriesCsv rec = read_series_csv(rec_files[k]);
        if (rec.samples.rows != gt.samples.rows)
            throw argument_error("reconstruction length mismatch: " + rec_files[k]);
        if (std::abs(rec.fs - gt.fs) > 1e-9 * gt.fs)
            throw argument_error("sampling rate mismatch: " + rec_files[k]);
        SignalWindow w;
        w.samples = rec.samples;
        w.sample_rate = rec.fs;
        auto spectra = power_spectrum(w, pad);
        for (SpectrumEstimate& s : spectra) {
            s.band_lo_bpm = band_lo;
            s.band_hi_bpm = band_hi;
        }
        rates[k] = estimate_pulse_rate(spectra);
        if (k == 0) {
            regions = static_cast<int>(spectra.size());
            first_spectra = spectra;
            region_power.assign(spectra[0].power.size(),
                                std::vector<std::vector<double>>(
                                    regions, std::vector<double>(N, 0.0)));
        }
        summed[k].assign(spectra[0].power.size(), 0.0);
        for (int r = 0; r < regions; ++r)
            for (size_t m = 0; m < spectra[r].power.size(); ++m) {
                summed[k][m] += spectra[r].power[m];
                region_power[m][r][k] = spectra[r].power[m];
            }
    }

    SignalWindow gw;
    gw.samples = gt.samples;
    gw.sample_rate = gt.fs;
    auto gt_spec = power_spectrum(gw, pad);
    gt_spec[0].band_lo_bpm = band_lo;
    gt_spec[0].band_hi_bpm = band_hi;
    const double gt_rate = estimate_pulse_rate(gt_spec);

    const size_t L = gt_spec[0].power.size();
    if (L != summed[0].size()) throw argument_error("spectrum grid mismatch against ground truth");

    // ensemble mean/std per bin
    std::vector<double> mu(L, 0.0), sigma(L, 0.0);
    for (size_t m = 0; m < L; ++m) {
        for (int k = 0; k < N; ++k) mu[m] += summed[k][m] / N;
        for (int k = 0; k < N; ++k) sigma[m] += (summed[k][m] - mu[m]) * (summed[k][m] - mu[m]);
        sigma[m] = N > 1 ? std::sqrt(sigma[m] / (N - 1)) : 0.0;
    }

    const PulseMetrics pm = pulse_metrics(rates, std::vector<double>(N, gt_rate));
    const SpectrumMetrics sm = spectrum_metrics(mu, gt_spec[0].power);
    const UncertaintyReport uq = build_uncertainty_report(gt_spec[0].power, mu, sigma);
    const BlandAltman ba = bland_altman(rates, std::vector<double>(N, gt_rate));

    fs::create_directories(out);

    // gauge table over in-band bins x regions x realizations
    json gauge_json = json::object();
    if (regions >= 2 && N >= 2) {
        std::vector<int> band_bins;
        for (size_t m = 0; m < L; ++m)
            if (first_spectra[0].bin_freqs_bpm[m] >= band_lo &&
                first_spectra[0].bin_freqs_bpm[m] <= band_hi)
                band_bins.push_back(static_cast<int>(m));
        GaugeTable table(static_cast<int>(band_bins.size()), regions, N);
        for (size_t p = 0; p < band_bins.size(); ++p)
            for (int o = 0; o < regions; ++o)
                for (int k = 0; k < N; ++k)
                    table.at(static_cast<int>(p), o, k) = region_power[band_bins[p]][o][k];
        const GaugeResult g = gauge_rr(table);
        write_gauge_csv((fs::path(out) / "gauge.csv").string(), g);
        gauge_json = {{"repeatability", g.repeatability},
                      {"reproducibility", g.reproducibility},
                      {"operator", g.operator_var},
                      {"part", g.part_var},
                      {"repeatability_pct", g.repeatability_pct},
                      {"reproducibility_pct", g.reproducibility_pct},
                      {"operator_pct", g.operator_pct},
                      {"part_pct", g.part_pct},
                      {"degenerate", g.degenerate}};
    } else {
        gauge_json = {{"skipped", "needs at least 2 regions and 2 realizations"}};
    }

    {
        std::vector<std::vector<double>> rows;
        for (size_t k = 0; k < uq.calibration.levels.size(); ++k)
            rows.push_back({uq.calibration.levels[k], uq.calibration.observed[k]});
        write_csv((fs::path(out) / "calibration.csv").string(), {"level", "observed"}, rows);
    }
    {
        std::vector<std::vector<double>> rows;
        for (size_t k = 0; k < ba.means.size(); ++k) rows.push_back({ba.means[k], ba.diffs[k]});
        write_csv((fs::path(out) / "bland_altman.csv").string(), {"mean", "diff"}, rows);
    }

    json report = {
        {"n_realizations", N},
        {"gt_rate_bpm", gt_rate},
        {"rates_bpm", rates},
        {"pulse", {{"mae", pm.mae}, {"rmse", pm.rmse}}},
        {"spectrum",
         {{"mae", sm.mae}, {"rmse", sm.rmse}, {"r2", sm.r2}}},
        {"uq",
         {{"nll", uq.nll},
          {"crps", uq.crps},
          {"sharpness", uq.sharpness},
          {"check_score", uq.check_score},
          {"interval_score", uq.interval_score},
          {"miscalibration_area", uq.calibration.miscalibration_area}}},
        {"bland_altman",
         {{"mean_diff", ba.mean_diff}, {"sd_diff", ba.sd_diff}, {"loa_lo", ba.loa_lo},
          {"loa_hi", ba.loa_hi}}},
        {"gauge", gauge_json}};
    if (pm.pcc) report["pulse"]["pcc"] = *pm.pcc;
    if (sm.pcc) report["spectrum"]["pcc"] = *sm.pcc;

    {
        std::ofstream f((fs::path(out) / "report.json").string());
        f << report.dump(2) << "\n";
    }
    write_manifest((fs::path(out) / "manifest.json").string(), "evaluate",
                   {{"ensemble", ensemble_dir},
                    {"gt", gt_path},
                    {"band", {band_lo, band_hi}},
                    {"pad", pad}},
                   {{"report", "report.json"}});
    std::cout << "pulse mae " << pm.mae << " bpm over " << N << " realizations\n";
    return 0;
}

// --- gauge ------------------------------------------------------------------

int cmd_gauge(const std::string& input_path, const std::string& out) {
    const CsvTable t = read_csv(input_path);
    if (t.header != std::vector<std::string>{"part", "operator", "repeat", "value"})
        throw argument_error("gauge input must have header part,operator,repeat,value");

    int P = 0, O = 0, K = 0;
    for (const auto& row : t.rows) {
        P = std::max(P, static_cast<int>(row[0]) + 1);
        O = std::max(O, static_cast<int>(row[1]) + 1);
        K = std::max(K, static_cast<int>(row[2]) + 1);
    }
    if (t.rows.size() != static_cast<size_t>(P) * O * K)
        throw argument_error("gauge input is not a full crossed table (" +
                             std::to_string(t.rows.size()) + " rows for " + std::to_string(P) +
                             "x" + std::to_string(O) + "x" + std::to_string(K) + ")");
    GaugeTable table(P, O, K);
    std::set<std::tuple<int, int, int>> seen;
    for (const auto& row : t.rows) {
        const int p = static_cast<int>(row[0]), o = static_cast<int>(row[1]),
                  k = static_cast<int>(row[2]);
        if (!seen.insert({p, o, k}).second)
            throw argument_error("gauge input has duplicate cell entries");
        table.at(p, o, k) = row[3];
    }

    const GaugeResult g = gauge_rr(table);
    fs::create_directories(out);
    write_gauge_csv((fs::path(out) / "gauge.csv").string(), g);
    write_manifest((fs::path(out) / "manifest.json").string(), "gauge",
                   {{"input", input_path}, {"parts", P}, {"operators", O}, {"repeats", K}},
                   {{"degenerate", g.degenerate}});
    std::cout << "part " << g.part_pct << "% / repeatability " << g.repeatability_pct << "%\n";
    return 0;
}

// --- ablate -----------------------------------------------------------------

int cmd_ablate(const std::string& config_path, const std::string& dataset_dir,
               const std::string& out) {
    const TomlMap cfg = read_toml(config_path);
    const Dataset ds = load_dataset(dataset_dir);

    const std::vector<double> lambdas = toml_arr(cfg, "ablate.lambdas", {0.0, 0.1});
    const std::vector<double> seeds = toml_arr(cfg, "ablate.seeds", {0.0});
    if (lambdas.empty() || seeds.empty())
        throw argument_error("ablate.lambdas and ablate.seeds must be nonempty");

    TrainConfig base;
    base.delta_shift_sec = toml_num(cfg, "train.delta_shift", base.delta_shift_sec);
    base.batch_size = toml_int(cfg, "train.batch_size", base.batch_size);
    base.epochs = toml_int(cfg, "train.epochs", base.epochs);
    base.lr = toml_num(cfg, "train.lr", base.lr);
    base.window_length = toml_int(cfg, "train.window_length", base.window_length);
    base.stride = toml_int(cfg, "train.stride", base.stride);
    base.val_fraction = toml_num(cfg, "train.val_fraction", base.val_fraction);
    base.steps_per_epoch = toml_int(cfg, "train.steps_per_epoch", base.steps_per_epoch);

    NetConfig net;
    net.channels = ds.subjects.front().x1.cols;
    net.hidden = toml_int(cfg, "net.hidden", net.hidden);
    net.kernel = toml_int(cfg, "net.kernel", net.kernel);
    net.blocks = toml_int(cfg, "net.blocks", net.blocks);
    net.time_dim = toml_int(cfg, "net.time_dim", net.time_dim);

    std::vector<std::vector<double>> rows;
    for (double lambda : lambdas)
        for (double seed : seeds) {
            TrainConfig tc = base;
            tc.lambda_rcl = lambda;
            tc.seed = static_cast<uint64_t>(seed);
            const TrainResult res = train(ds, tc, net);
            rows.push_back({lambda, seed, res.best_val, res.curves.back().total,
                            static_cast<double>(res.adam_v.step)});
            std::cout << "lambda " << lambda << " seed " << seed << " best val " << res.best_val
                      << "\n";
        }

    fs::create_directories(out);
    write_csv((fs::path(out) / "ablation.csv").string(),
              {"lambda", "seed", "best_val", "final_total", "steps"}, rows);
    write_manifest((fs::path(out) / "manifest.json").string(), "ablate", toml_echo(cfg),
                   {{"dataset", dataset_dir}, {"runs", rows.size()}});
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Pulse recovery via interpolant transport: data synthesis, training, "
                 "posterior sampling, and uncertainty evaluation"};
    app.require_subcommand(1);

    std::string config_path, dataset_dir, out_dir, ck_path, input_path, resume_path;
    std::string snapshots, form = "consistent", gt_path;
    double lambda_override = -1.0, delta_override = -1.0, snapshot_step = 0.0;
    double epsilon = 0.5, t_clamp = 1e-3;
    std::vector<double> band = {42.0, 150.0};
    int n = 100, steps = 500, jobs = 1, pad = 10;
    uint64_t seed = 0;

    CLI::App* gen = app.add_subcommand("generate", "synthesize a paired dataset");
    gen->add_option("--config", config_path, "TOML config")->required();
    gen->add_option("--out", out_dir, "output directory");

    CLI::App* tr = app.add_subcommand("train", "fit the flow and denoiser networks");
    tr->add_option("--config", config_path, "TOML config")->required();
    tr->add_option("--dataset", dataset_dir, "dataset directory")->required();
    tr->add_option("--out", out_dir, "output directory");
    tr->add_option("--lambda-rcl", lambda_override, "override train.lambda_rcl");
    tr->add_option("--delta-shift", delta_override, "override train.delta_shift (seconds)");
    tr->add_option("--resume", resume_path, "checkpoint to resume from");

    CLI::App* sa = app.add_subcommand("sample", "posterior-sample reconstructions");
    sa->add_option("--checkpoint", ck_path, "trained checkpoint")->required();
    sa->add_option("--input", input_path, "measurement series CSV")->required();
    sa->add_option("--out", out_dir, "output directory");
    sa->add_option("--n", n, "ensemble size");
    sa->add_option("--seed", seed, "master seed");
    sa->add_option("--steps", steps, "solver steps");
    sa->add_option("--epsilon", epsilon, "noise schedule constant");
    sa->add_option("--t-clamp", t_clamp, "endpoint clamp");
    sa->add_option("--jobs", jobs, "worker threads");
    sa->add_option("--snapshots", snapshots, "times to record: 'a..b' or comma list");
    sa->add_option("--snapshot-step", snapshot_step, "grid step for 'a..b' ranges");
    sa->add_option("--drift-form", form, "consistent | alternative");

    CLI::App* ev = app.add_subcommand("evaluate", "score an ensemble against ground truth");
    ev->add_option("--ensemble", dataset_dir, "ensemble directory with rec_*.csv")->required();
    ev->add_option("--gt", gt_path, "clean reference series CSV")->required();
    ev->add_option("--out", out_dir, "output directory");
    ev->add_option("--band", band, "pulse band in bpm")->expected(2);
    ev->add_option("--pad", pad, "spectrum zero-padding factor");

    CLI::App* ga = app.add_subcommand("gauge", "variance decomposition of a measurement table");
    ga->add_option("--input", input_path, "CSV with part,operator,repeat,value")->required();
    ga->add_option("--out", out_dir, "output directory");

    CLI::App* ab = app.add_subcommand("ablate", "train over a lambda/seed grid");
    ab->add_option("--config", config_path, "TOML config with [ablate] grid")->required();
    ab->add_option("--dataset", dataset_dir, "dataset directory")->required();
    ab->add_option("--out", out_dir, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (gen->parsed()) return cmd_generate(config_path, resolve_out(out_dir, "dataset"));
        if (tr->parsed())
            return cmd_train(config_path, dataset_dir, resolve_out(out_dir, "train"),
                             lambda_override, delta_override, resume_path);
        if (sa->parsed())
            return cmd_sample(ck_path, input_path, resolve_out(out_dir, "sample"), n, seed, steps,
                              epsilon, t_clamp, jobs, snapshots, snapshot_step, form);
        if (ev->parsed())
            return cmd_evaluate(dataset_dir, gt_path, resolve_out(out_dir, "evaluate"), band[0],
                                band[1], pad);
        if (ga->parsed()) return cmd_gauge(input_path, resolve_out(out_dir, "gauge"));
        if (ab->parsed())
            return cmd_ablate(config_path, dataset_dir, resolve_out(out_dir, "ablate"));
    } catch (const integrity_error& e) {
        std::cerr << "integrity error: " << e.what() << "\n";
        return 4;
    } catch (const divergence_error& e) {
        std::cerr << "divergence: " << e.what() << "\n";
        return 3;
    } catch (const numeric_error& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
