#ifndef DMN_IO_HPP
#define DMN_IO_HPP

// File formats and serialization.
//
//   parameters : JSON, numbers as hex-float strings for bit-exact round trips
//   dataset    : JSON lines, {"C_p1": [36], "C_p2": [36], "C_dns": [36]}
//   materials  : JSON, {"phase1": {...}, "phase2": {...}, "overrides": {...}}
//   program    : JSON, {"steps": [{"control": [...], "targets": [...],
//                "increments": n}]}
//   reports    : CSV + JSON twins
//   manifests  : JSON, written atomically next to every output
//
// Mat6 serializes as a flat row-major array of 36 numbers, Vec6 as 6 numbers
// (Mandel components). All writes go through a temp-file-plus-rename helper
// so interrupted runs never leave truncated files.

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dmn/errors.hpp"
#include "dmn/mandel.hpp"
#include "dmn/materials.hpp"
#include "dmn/network.hpp"
#include "dmn/online.hpp"
#include "dmn/training.hpp"

namespace dmn::io {

using json = nlohmann::json;

inline constexpr const char* kCodeVersion = "dmn 0.1.0";
inline constexpr const char* kParamsConvention = "mandel-v1";

// --- low-level helpers ----------------------------------------------------------

inline std::string format_full(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string format_hex(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%a", v);
    return buf;
}

inline double parse_number_or_hex(const json& j, const std::string& what) {
    if (j.is_number()) return j.get<double>();
    if (j.is_string()) {
        const std::string s = j.get<std::string>();
        char* end = nullptr;
        const double v = std::strtod(s.c_str(), &end);
        if (end == s.c_str() || (end && *end != '\0')) throw InputError("cannot parse " + what + " value '" + s + "'");
        return v;
    }
    throw InputError(what + " must be a number or a numeric string");
}

inline void atomic_write(const std::filesystem::path& path, const std::string& content) {
    namespace fs = std::filesystem;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw InputError("cannot open " + tmp.string() + " for writing");
        out << content;
        out.flush();
        if (!out) throw InputError("write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Parse with a line/column diagnostic derived from the parser's byte offset.
inline json parse_json_text(const std::string& text, const std::string& origin) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        std::size_t line = 1, col = 1;
        const std::size_t stop = e.byte > 0 && e.byte <= text.size() ? e.byte - 1 : text.size();
        for (std::size_t i = 0; i < stop; ++i) {
            if (text[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        throw InputError(origin + ": malformed JSON at line " + std::to_string(line) + " column " +
                         std::to_string(col) + " (" + e.what() + ")");
    }
}

inline json parse_json_file(const std::filesystem::path& path) {
    return parse_json_text(read_file(path), path.string());
}

inline json mat6_to_json(const Mat6& m) {
    json a = json::array();
    for (double v : m.m) a.push_back(v);
    return a;
}

inline Mat6 mat6_from_json(const json& j, const std::string& what) {
    if (!j.is_array() || j.size() != 36) throw InputError(what + " must be a flat array of 36 numbers");
    Mat6 m;
    for (int i = 0; i < 36; ++i) m.m[i] = parse_number_or_hex(j[i], what);
    return m;
}

inline json vec6_to_json(const Vec6& v) {
    json a = json::array();
    for (int i = 0; i < 6; ++i) a.push_back(v[i]);
    return a;
}

inline Vec6 vec6_from_json(const json& j, const std::string& what) {
    if (!j.is_array() || j.size() != 6) throw InputError(what + " must be an array of 6 numbers");
    Vec6 v;
    for (int i = 0; i < 6; ++i) v[i] = parse_number_or_hex(j[i], what);
    return v;
}

// --- network parameters -----------------------------------------------------------

inline std::string params_to_string(const DmnParams& p) {
    validate(p);
    json j;
    j["convention"] = kParamsConvention;
    j["depth"] = p.depth;
    json zs = json::array();
    for (double z : p.z) zs.push_back(format_hex(z));
    j["z"] = std::move(zs);
    json as = json::array();
    for (const Angles& a : p.angles) as.push_back(json::array({format_hex(a.alpha), format_hex(a.beta), format_hex(a.gamma)}));
    j["angles"] = std::move(as);
    return j.dump(2) + "\n";
}

inline DmnParams params_from_json(const json& j, const std::string& origin) {
    if (!j.is_object()) throw InputError(origin + ": parameter file must be a JSON object");
    if (j.value("convention", std::string{}) != kParamsConvention)
        throw InputError(origin + ": unknown or missing convention (expected '" + std::string(kParamsConvention) +
                         "')");
    DmnParams p;
    p.depth = j.at("depth").get<int>();
    for (const json& z : j.at("z")) p.z.push_back(parse_number_or_hex(z, "z"));
    for (const json& a : j.at("angles")) {
        if (!a.is_array() || a.size() != 3) throw InputError(origin + ": each angle entry must be a triple");
        Angles ang;
        ang.alpha = parse_number_or_hex(a[0], "alpha");
        ang.beta = parse_number_or_hex(a[1], "beta");
        ang.gamma = parse_number_or_hex(a[2], "gamma");
        p.angles.push_back(ang);
    }
    validate(p);
    return p;
}

inline void save_params(const std::filesystem::path& path, const DmnParams& p) {
    atomic_write(path, params_to_string(p));
}

inline DmnParams load_params(const std::filesystem::path& path) {
    return params_from_json(parse_json_file(path), path.string());
}

// --- datasets (JSON lines) -----------------------------------------------------------

inline std::string dataset_to_string(const Dataset& data) {
    std::string out;
    for (const TrainingSample& s : data) {
        json j;
        j["C_p1"] = mat6_to_json(s.c_p1);
        j["C_p2"] = mat6_to_json(s.c_p2);
        j["C_dns"] = mat6_to_json(s.c_dns);
        out += j.dump();
        out += '\n';
    }
    return out;
}

inline void save_dataset(const std::filesystem::path& path, const Dataset& data) {
    atomic_write(path, dataset_to_string(data));
}

inline Dataset load_dataset(const std::filesystem::path& path) {
    const std::string text = read_file(path);
    Dataset data;
    std::size_t pos = 0, line_no = 0;
    while (pos < text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string::npos) eol = text.size();
        ++line_no;
        const std::string line = text.substr(pos, eol - pos);
        pos = eol + 1;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const json j = parse_json_text(line, path.string() + " line " + std::to_string(line_no));
        TrainingSample s;
        s.c_p1 = mat6_from_json(j.at("C_p1"), "C_p1");
        s.c_p2 = mat6_from_json(j.at("C_p2"), "C_p2");
        s.c_dns = mat6_from_json(j.at("C_dns"), "C_dns");
        const char* names[3] = {"C_p1", "C_p2", "C_dns"};
        const Mat6* mats[3] = {&s.c_p1, &s.c_p2, &s.c_dns};
        for (int m = 0; m < 3; ++m) {
            if (!is_symmetric(*mats[m], 1e-8))
                throw InputError(path.string() + " line " + std::to_string(line_no) + ": " + names[m] +
                                 " is not symmetric");
        }
        data.push_back(s);
    }
    if (data.empty()) throw InputError(path.string() + ": dataset is empty");
    return data;
}

// --- materials -------------------------------------------------------------------------

inline Material material_from_json(const json& j, const std::string& what) {
    if (!j.is_object()) throw InputError(what + " must be a JSON object");
    const std::string type = j.value("type", std::string{});
    Material m;
    m.elastic.E = parse_number_or_hex(j.at("E"), what + ".E");
    m.elastic.nu = parse_number_or_hex(j.at("nu"), what + ".nu");
    if (type == "elastic") {
        m.type = Material::Type::Elastic;
    } else if (type == "j2") {
        m.type = Material::Type::J2;
        m.sigma_y0 = parse_number_or_hex(j.at("sigma_y0"), what + ".sigma_y0");
        m.hardening = j.contains("H") ? parse_number_or_hex(j.at("H"), what + ".H") : 0.0;
    } else {
        throw InputError(what + ": material type must be 'elastic' or 'j2'");
    }
    validate(m);
    return m;
}

inline json material_to_json(const Material& m) {
    json j;
    j["type"] = m.type == Material::Type::Elastic ? "elastic" : "j2";
    j["E"] = m.elastic.E;
    j["nu"] = m.elastic.nu;
    if (m.type == Material::Type::J2) {
        j["sigma_y0"] = m.sigma_y0;
        j["H"] = m.hardening;
    }
    return j;
}

inline MaterialSet material_set_from_json(const json& j, const std::string& origin) {
    if (!j.is_object()) throw InputError(origin + ": materials file must be a JSON object");
    MaterialSet set;
    set.phase1 = material_from_json(j.at("phase1"), "phase1");
    set.phase2 = material_from_json(j.at("phase2"), "phase2");
    if (j.contains("overrides")) {
        for (const auto& [key, val] : j.at("overrides").items()) {
            std::size_t leaf = 0;
            try {
                leaf = static_cast<std::size_t>(std::stoul(key));
            } catch (...) {
                throw InputError(origin + ": override key '" + key + "' is not a leaf index");
            }
            if (leaf < 1) throw InputError(origin + ": override leaf indices are 1-based");
            set.overrides[leaf] = material_from_json(val, "override " + key);
        }
    }
    return set;
}

inline MaterialSet load_materials(const std::filesystem::path& path) {
    return material_set_from_json(parse_json_file(path), path.string());
}

// --- loading programs ----------------------------------------------------------------------

inline LoadingProgram program_from_json(const json& j, const std::string& origin) {
    if (!j.is_object() || !j.contains("steps")) throw InputError(origin + ": program must contain 'steps'");
    LoadingProgram prog;
    for (const json& js : j.at("steps")) {
        LoadStep step;
        const json& ctrl = js.at("control");
        if (!ctrl.is_array() || ctrl.size() != 6)
            throw InputError(origin + ": 'control' must list 6 entries of 'strain' or 'stress'");
        for (int i = 0; i < 6; ++i) {
            const std::string c = ctrl[i].get<std::string>();
            if (c == "strain")
                step.strain_control[i] = true;
            else if (c == "stress")
                step.strain_control[i] = false;
            else
                throw InputError(origin + ": control entries must be 'strain' or 'stress'");
        }
        step.targets = vec6_from_json(js.at("targets"), "targets");
        step.increments = js.value("increments", 1);
        if (step.increments < 1) throw InputError(origin + ": increments must be >= 1");
        prog.steps.push_back(step);
    }
    if (prog.steps.empty()) throw InputError(origin + ": program has no steps");
    return prog;
}

inline LoadingProgram load_program(const std::filesystem::path& path) {
    return program_from_json(parse_json_file(path), path.string());
}

// --- train report -----------------------------------------------------------------------------

inline std::string report_to_csv(const TrainReport& r) {
    std::string out = "epoch,train_loss,val_loss,reg,vf1\n";
    for (std::size_t e = 0; e < r.train_loss.size(); ++e) {
        out += std::to_string(e) + "," + format_full(r.train_loss[e]) + "," + format_full(r.val_loss[e]) + "," +
               format_full(r.reg[e]) + "," + format_full(r.vf1[e]) + "\n";
    }
    return out;
}

inline std::string report_to_json_string(const TrainReport& r) {
    json j;
    j["train_loss"] = r.train_loss;
    j["val_loss"] = r.val_loss;
    j["reg"] = r.reg;
    j["vf1"] = r.vf1;
    j["epoch_seconds"] = r.epoch_seconds;
    j["best_epoch"] = r.best_epoch;
    j["best_val"] = r.best_val;
    j["wall_seconds"] = r.wall_seconds;
    return j.dump(2) + "\n";
}

// --- macro response ------------------------------------------------------------------------------

inline std::string response_to_csv(const MacroResponse& r) {
    std::string out = "increment,eps_1,eps_2,eps_3,eps_4,eps_5,eps_6,sig_1,sig_2,sig_3,sig_4,sig_5,sig_6,iters,resnorm\n";
    for (const ResponseRow& row : r.rows) {
        out += std::to_string(row.increment);
        for (int i = 0; i < 6; ++i) out += "," + format_full(row.eps[i]);
        for (int i = 0; i < 6; ++i) out += "," + format_full(row.sig[i]);
        out += "," + std::to_string(row.iterations) + "," + format_full(row.residual_norm) + "\n";
    }
    return out;
}

inline std::string response_to_json_string(const MacroResponse& r) {
    json rows = json::array();
    for (const ResponseRow& row : r.rows) {
        json jr;
        jr["increment"] = row.increment;
        jr["eps"] = vec6_to_json(row.eps);
        jr["sig"] = vec6_to_json(row.sig);
        jr["iterations"] = row.iterations;
        jr["residual_norm"] = row.residual_norm;
        jr["max_p_acc"] = row.max_p_acc;
        jr["mean_p_acc"] = row.mean_p_acc;
        jr["dissipation"] = row.dissipation;
        rows.push_back(jr);
    }
    json j;
    j["rows"] = std::move(rows);
    j["converged"] = r.converged;
    return j.dump(2) + "\n";
}

// --- run manifests ---------------------------------------------------------------------------------

inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

struct RunManifest {
    std::string command;
    std::string config_text;  // canonical flag string, hashed into config_hash
    std::uint64_t seed = 0;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    double wall_seconds = 0.0;
    json extra;  // command-specific details (e.g. generator geometry)
};

inline void write_manifest(const std::filesystem::path& primary_output, const RunManifest& m) {
    json j;
    j["command"] = m.command;
    j["config_hash"] = fnv1a(m.config_text);
    j["config"] = m.config_text;
    j["seed"] = m.seed;
    j["inputs"] = m.inputs;
    j["outputs"] = m.outputs;
    j["code_version"] = kCodeVersion;
    j["wall_seconds"] = m.wall_seconds;
    if (!m.extra.is_null()) j["details"] = m.extra;
    atomic_write(primary_output.string() + ".manifest.json", j.dump(2) + "\n");
}

} // namespace dmn::io

#endif
