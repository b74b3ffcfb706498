#pragma once

#include <cstdio>
#include <cstring>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "sipulse/core.hpp"
#include "sipulse/network.hpp"
#include "sipulse/optim.hpp"
#include "sipulse/signals.hpp"
#include "sipulse/synth.hpp"

namespace sipulse {

using json = nlohmann::json;

// --- formatting -------------------------------------------------------------

// Shortest exact round-trip formatting so repeated runs emit identical bytes.
inline std::string fmt_double(double x) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    double parsed = std::strtod(buf, nullptr);
    for (int prec = 1; prec < 17; ++prec) {
        char probe[32];
        std::snprintf(probe, sizeof(probe), "%.*g", prec, x);
        parsed = std::strtod(probe, nullptr);
        if (parsed == x) return probe;
    }
    return buf;
}

// --- hashing ----------------------------------------------------------------

inline uint64_t fnv1a(const std::string& data) {
    uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::string fnv1a_hex(const std::string& data) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a(data)));
    return buf;
}

// --- base64 -----------------------------------------------------------------

inline std::string base64_encode(const unsigned char* data, size_t n) {
    static const char* tbl = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    out.reserve((n + 2) / 3 * 4);
    for (size_t i = 0; i < n; i += 3) {
        unsigned v = data[i] << 16;
        if (i + 1 < n) v |= data[i + 1] << 8;
        if (i + 2 < n) v |= data[i + 2];
        out.push_back(tbl[(v >> 18) & 63]);
        out.push_back(tbl[(v >> 12) & 63]);
        out.push_back(i + 1 < n ? tbl[(v >> 6) & 63] : '=');
        out.push_back(i + 2 < n ? tbl[v & 63] : '=');
    }
    return out;
}

inline std::vector<unsigned char> base64_decode(const std::string& s) {
    auto val = [](char c) -> int {
        if (c >= 'A' && c <= 'Z') return c - 'A';
        if (c >= 'a' && c <= 'z') return c - 'a' + 26;
        if (c >= '0' && c <= '9') return c - '0' + 52;
        if (c == '+') return 62;
        if (c == '/') return 63;
        if (c == '=') return -1;
        throw argument_error("base64: invalid character");
    };
    std::vector<unsigned char> out;
    for (size_t i = 0; i + 3 < s.size(); i += 4) {
        const int a = val(s[i]), b = val(s[i + 1]), c = val(s[i + 2]), d = val(s[i + 3]);
        out.push_back(static_cast<unsigned char>((a << 2) | (b >> 4)));
        if (c >= 0) out.push_back(static_cast<unsigned char>(((b & 15) << 4) | (c >> 2)));
        if (d >= 0) out.push_back(static_cast<unsigned char>(((c & 3) << 6) | d));
    }
    return out;
}

// Little-endian doubles <-> base64.
inline std::string doubles_to_b64(const std::vector<double>& v) {
    return base64_encode(reinterpret_cast<const unsigned char*>(v.data()),
                         v.size() * sizeof(double));
}

inline std::vector<double> b64_to_doubles(const std::string& s) {
    const std::vector<unsigned char> bytes = base64_decode(s);
    if (bytes.size() % sizeof(double) != 0)
        throw argument_error("checkpoint: truncated parameter payload");
    std::vector<double> v(bytes.size() / sizeof(double));
    std::memcpy(v.data(), bytes.data(), bytes.size());
    return v;
}

// --- CSV --------------------------------------------------------------------

inline void write_csv(const std::string& path, const std::vector<std::string>& header,
                      const std::vector<std::vector<double>>& rows) {
    std::ofstream f(path);
    if (!f) throw argument_error("cannot open for writing: " + path);
    for (size_t j = 0; j < header.size(); ++j) f << (j ? "," : "") << header[j];
    f << "\n";
    for (const auto& row : rows) {
        for (size_t j = 0; j < row.size(); ++j) f << (j ? "," : "") << fmt_double(row[j]);
        f << "\n";
    }
}

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
};

inline CsvTable read_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw argument_error("cannot open: " + path);
    CsvTable t;
    std::string line;
    if (!std::getline(f, line)) throw argument_error("empty csv: " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::stringstream hs(line);
    std::string cell;
    while (std::getline(hs, cell, ',')) t.header.push_back(cell);
    while (std::getline(f, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream rs(line);
        while (std::getline(rs, cell, ',')) row.push_back(std::strtod(cell.c_str(), nullptr));
        if (row.size() != t.header.size())
            throw argument_error("csv row width mismatch in " + path);
        t.rows.push_back(std::move(row));
    }
    return t;
}

// Time series as `time,<region1>,...` with one row per sample.
inline void write_series_csv(const std::string& path, const Grid& series, double fs,
                             const std::vector<std::string>& labels) {
    std::vector<std::string> header = {"time"};
    for (int j = 0; j < series.cols; ++j)
        header.push_back(j < static_cast<int>(labels.size()) ? labels[j]
                                                             : "ch" + std::to_string(j + 1));
    std::vector<std::vector<double>> rows;
    rows.reserve(series.rows);
    for (int i = 0; i < series.rows; ++i) {
        std::vector<double> row = {i / fs};
        for (int j = 0; j < series.cols; ++j) row.push_back(series(i, j));
        rows.push_back(std::move(row));
    }
    write_csv(path, header, rows);
}

struct SeriesCsv {
    Grid samples;
    std::vector<std::string> labels;
    double fs = 0.0;  // inferred from the time column
};

inline SeriesCsv read_series_csv(const std::string& path) {
    const CsvTable t = read_csv(path);
    if (t.header.size() < 2 || t.header[0] != "time")
        throw argument_error("series csv must start with a 'time' column: " + path);
    if (t.rows.size() < 2) throw argument_error("series csv too short: " + path);
    SeriesCsv out;
    out.labels.assign(t.header.begin() + 1, t.header.end());
    const int R = static_cast<int>(out.labels.size());
    out.samples = Grid(static_cast<int>(t.rows.size()), R);
    for (size_t i = 0; i < t.rows.size(); ++i)
        for (int j = 0; j < R; ++j) out.samples(static_cast<int>(i), j) = t.rows[i][j + 1];
    const double dt = t.rows[1][0] - t.rows[0][0];
    if (!(dt > 0.0)) throw argument_error("series csv: non-increasing time column");
    out.fs = 1.0 / dt;
    return out;
}

// --- TOML subset ------------------------------------------------------------

// Flat TOML: [section] headers, key = value with numbers, booleans, quoted
// strings, and arrays of numbers. Enough for run configs and ablation grids.
using TomlValue = std::variant<double, bool, std::string, std::vector<double>>;
using TomlMap = std::map<std::string, TomlValue>;  // keyed "section.key"

inline TomlMap parse_toml(const std::string& text) {
    TomlMap out;
    std::string section;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;

    auto strip = [](std::string s) {
        const size_t a = s.find_first_not_of(" \t\r");
        if (a == std::string::npos) return std::string();
        const size_t b = s.find_last_not_of(" \t\r");
        return s.substr(a, b - a + 1);
    };

    auto parse_scalar = [&](std::string v, int ln) -> TomlValue {
        v = strip(v);
        if (v.empty()) throw argument_error("toml line " + std::to_string(ln) + ": empty value");
        if (v == "true") return true;
        if (v == "false") return false;
        if (v.front() == '"') {
            if (v.size() < 2 || v.back() != '"')
                throw argument_error("toml line " + std::to_string(ln) + ": unterminated string");
            return v.substr(1, v.size() - 2);
        }
        char* end = nullptr;
        const double d = std::strtod(v.c_str(), &end);
        if (end != v.c_str() + v.size())
            throw argument_error("toml line " + std::to_string(ln) + ": bad value '" + v + "'");
        return d;
    };

    while (std::getline(in, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = strip(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw argument_error("toml line " + std::to_string(lineno) + ": bad section");
            section = strip(line.substr(1, line.size() - 2));
            continue;
        }
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw argument_error("toml line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = strip(line.substr(0, eq));
        std::string value = strip(line.substr(eq + 1));
        const std::string full = section.empty() ? key : section + "." + key;

        if (!value.empty() && value.front() == '[') {
            if (value.back() != ']')
                throw argument_error("toml line " + std::to_string(lineno) + ": unterminated array");
            std::vector<double> arr;
            std::stringstream as(value.substr(1, value.size() - 2));
            std::string item;
            while (std::getline(as, item, ',')) {
                item = strip(item);
                if (item.empty()) continue;
                arr.push_back(std::get<double>(parse_scalar(item, lineno)));
            }
            out[full] = arr;
        } else {
            out[full] = parse_scalar(value, lineno);
        }
    }
    return out;
}

inline TomlMap read_toml(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw argument_error("cannot open config: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_toml(ss.str());
}

inline double toml_num(const TomlMap& m, const std::string& key, double fallback) {
    auto it = m.find(key);
    if (it == m.end()) return fallback;
    if (!std::holds_alternative<double>(it->second))
        throw argument_error("config field '" + key + "': expected a number");
    return std::get<double>(it->second);
}

inline std::vector<double> toml_arr(const TomlMap& m, const std::string& key,
                                    std::vector<double> fallback) {
    auto it = m.find(key);
    if (it == m.end()) return fallback;
    if (!std::holds_alternative<std::vector<double>>(it->second))
        throw argument_error("config field '" + key + "': expected an array");
    return std::get<std::vector<double>>(it->second);
}

// --- checkpoints ------------------------------------------------------------

inline json params_to_json(const ad::Params& p) {
    json out = json::object();
    for (const auto& [name, t] : p)
        out[name] = {{"ch", t.ch}, {"len", t.len}, {"data", doubles_to_b64(t.v)}};
    return out;
}

inline ad::Params params_from_json(const json& j) {
    ad::Params p;
    for (auto it = j.begin(); it != j.end(); ++it) {
        ad::Tensor t(it.value().at("ch").get<int>(), it.value().at("len").get<int>());
        t.v = b64_to_doubles(it.value().at("data").get<std::string>());
        if (t.v.size() != static_cast<size_t>(t.ch) * t.len)
            throw argument_error("checkpoint: payload size mismatch for '" + it.key() + "'");
        p[it.key()] = std::move(t);
    }
    return p;
}

inline json adam_to_json(const AdamState& st) {
    return {{"m", params_to_json(st.m)}, {"v", params_to_json(st.v)}, {"step", st.step},
            {"lr", st.lr},               {"beta1", st.beta1},         {"beta2", st.beta2},
            {"eps", st.eps}};
}

inline AdamState adam_from_json(const json& j) {
    AdamState st;
    st.m = params_from_json(j.at("m"));
    st.v = params_from_json(j.at("v"));
    st.step = j.at("step").get<long>();
    st.lr = j.at("lr").get<double>();
    st.beta1 = j.at("beta1").get<double>();
    st.beta2 = j.at("beta2").get<double>();
    st.eps = j.at("eps").get<double>();
    return st;
}

struct Checkpoint {
    NetConfig net;
    double fs = 25.0;
    ad::Params params_v;
    ad::Params params_n;
    AdamState adam_v;
    AdamState adam_n;
    json train_config = json::object();  // echo of the training configuration
};

inline json net_to_json(const NetConfig& c) {
    return {{"channels", c.channels}, {"hidden", c.hidden},     {"kernel", c.kernel},
            {"blocks", c.blocks},     {"time_dim", c.time_dim}};
}

inline NetConfig net_from_json(const json& j) {
    NetConfig c;
    c.channels = j.at("channels").get<int>();
    c.hidden = j.at("hidden").get<int>();
    c.kernel = j.at("kernel").get<int>();
    c.blocks = j.at("blocks").get<int>();
    c.time_dim = j.at("time_dim").get<int>();
    return c;
}

// Versioned JSON envelope with a content hash over the payload.
inline std::string checkpoint_to_string(const Checkpoint& ck) {
    json payload = {{"format_version", 1},
                    {"architecture", net_to_json(ck.net)},
                    {"sample_rate", ck.fs},
                    {"params_v", params_to_json(ck.params_v)},
                    {"params_n", params_to_json(ck.params_n)},
                    {"adam_v", adam_to_json(ck.adam_v)},
                    {"adam_n", adam_to_json(ck.adam_n)},
                    {"train_config", ck.train_config}};
    json envelope = {{"hash", fnv1a_hex(payload.dump())}, {"payload", payload}};
    return envelope.dump(2);
}

inline void write_checkpoint(const std::string& path, const Checkpoint& ck) {
    std::ofstream f(path);
    if (!f) throw argument_error("cannot open for writing: " + path);
    f << checkpoint_to_string(ck) << "\n";
}

inline Checkpoint read_checkpoint(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw argument_error("cannot open checkpoint: " + path);
    json envelope;
    try {
        f >> envelope;
    } catch (const json::exception& e) {
        throw integrity_error(std::string("checkpoint parse failure: ") + e.what());
    }
    const json& payload = envelope.at("payload");
    if (fnv1a_hex(payload.dump()) != envelope.at("hash").get<std::string>())
        throw integrity_error("checkpoint hash mismatch: " + path);
    if (payload.at("format_version").get<int>() != 1)
        throw integrity_error("checkpoint: unsupported format version");

    Checkpoint ck;
    ck.net = net_from_json(payload.at("architecture"));
    ck.fs = payload.at("sample_rate").get<double>();
    ck.params_v = params_from_json(payload.at("params_v"));
    ck.params_n = params_from_json(payload.at("params_n"));
    ck.adam_v = adam_from_json(payload.at("adam_v"));
    ck.adam_n = adam_from_json(payload.at("adam_n"));
    ck.train_config = payload.at("train_config");
    check_params(ck.net, ck.params_v);
    check_params(ck.net, ck.params_n);
    return ck;
}

inline std::string checkpoint_hash(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw argument_error("cannot open checkpoint: " + path);
    json envelope;
    f >> envelope;
    return envelope.at("hash").get<std::string>();
}

// --- run manifests ----------------------------------------------------------

constexpr const char* kToolVersion = "0.1.0";

inline void write_manifest(const std::string& path, const std::string& command,
                           const json& config_echo, const json& extra = json::object()) {
    json m = {{"command", command},
              {"config", config_echo},
              {"tool_version", kToolVersion},
              {"wall_clock_utc", static_cast<long>(std::time(nullptr))}};
    for (auto it = extra.begin(); it != extra.end(); ++it) m[it.key()] = it.value();
    std::ofstream f(path);
    if (!f) throw argument_error("cannot open for writing: " + path);
    f << m.dump(2) << "\n";
}

}  // namespace sipulse
