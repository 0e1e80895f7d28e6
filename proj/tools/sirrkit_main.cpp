// sirrkit: reflection separation via convolutional sparse coding with an
// exclusion prior, solved by iterative sparse and auxiliary feature updates.
//
// Verbs: synth, separate, eval, gradcheck, trace-plot.
// Exit codes: 0 ok, 2 usage/input error, 3 numerical divergence,
// 4 verification failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "sirrkit/formation.hpp"
#include "sirrkit/image_io.hpp"
#include "sirrkit/metrics.hpp"
#include "sirrkit/prox.hpp"
#include "sirrkit/solver.hpp"
#include "sirrkit/tensor.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace sirrkit;

namespace {

constexpr const char* kToolVersion = "sirrkit 0.1.0";

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitDivergence = 3;
constexpr int kExitVerification = 4;

// ---------------------------------------------------------------------------
// run configuration: solver + dictionary + prox selection, kept as a flat
// key/value map so config files, manifests and CLI overrides share one path
// ---------------------------------------------------------------------------

struct RunConfig {
    SolverConfig solver;
    ProxSet proxes;
    int n = 16;
    int m = 24;
    int kernel_size = 5;
    std::uint64_t dict_seed = 1;
    DictScheme dict_scheme = DictScheme::gradient_seeded;
};

ProxKind parse_prox_kind(const std::string& v) {
    if (v == "soft_threshold") return ProxKind::soft_threshold;
    if (v == "nonneg_soft_threshold") return ProxKind::nonneg_soft_threshold;
    if (v == "identity") return ProxKind::identity;
    throw std::invalid_argument("unknown prox kind: " + v);
}

const char* prox_kind_name(ProxKind k) {
    switch (k) {
        case ProxKind::soft_threshold: return "soft_threshold";
        case ProxKind::nonneg_soft_threshold: return "nonneg_soft_threshold";
        case ProxKind::identity: return "identity";
    }
    return "?";
}

DictScheme parse_dict_scheme(const std::string& v) {
    if (v == "random_unit") return DictScheme::random_unit;
    if (v == "gradient_seeded") return DictScheme::gradient_seeded;
    throw std::invalid_argument("unknown dict scheme: " + v);
}

double parse_double(const std::string& v) {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("not a number: " + v);
    return x;
}

long long parse_int(const std::string& v) {
    std::size_t pos = 0;
    const long long x = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("not an integer: " + v);
    return x;
}

bool parse_bool(const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw std::invalid_argument("not a boolean: " + v);
}

void apply_config_key(RunConfig& cfg, const std::string& key, const std::string& value) {
    SolverConfig& s = cfg.solver;
    if (key == "lambda_t") s.lambda_t = parse_double(value);
    else if (key == "lambda_r") s.lambda_r = parse_double(value);
    else if (key == "lambda_n") s.lambda_n = parse_double(value);
    else if (key == "kappa") s.kappa = parse_double(value);
    else if (key == "tau") s.tau = parse_double(value);
    else if (key == "eta_t") s.eta_t = parse_double(value);
    else if (key == "eta_r") s.eta_r = parse_double(value);
    else if (key == "eta_n") s.eta_n = parse_double(value);
    else if (key == "eta_a") s.eta_a = parse_double(value);
    else if (key == "stages") s.stages = static_cast<int>(parse_int(value));
    else if (key == "scales") s.scales = static_cast<int>(parse_int(value));
    else if (key == "rel_tol") s.rel_tol = parse_double(value);
    else if (key == "backtrack") s.backtrack = parse_bool(value);
    else if (key == "backtrack_beta") s.backtrack_beta = parse_double(value);
    else if (key == "max_backtrack") s.max_backtrack = static_cast<int>(parse_int(value));
    else if (key == "init_beta") s.init_beta = parse_double(value);
    else if (key == "n") cfg.n = static_cast<int>(parse_int(value));
    else if (key == "m") cfg.m = static_cast<int>(parse_int(value));
    else if (key == "kernel_size") cfg.kernel_size = static_cast<int>(parse_int(value));
    else if (key == "dict_seed") cfg.dict_seed = static_cast<std::uint64_t>(parse_int(value));
    else if (key == "dict_scheme") cfg.dict_scheme = parse_dict_scheme(value);
    else if (key == "prox_t") cfg.proxes.t = parse_prox_kind(value);
    else if (key == "prox_r") cfg.proxes.r = parse_prox_kind(value);
    else if (key == "prox_n") cfg.proxes.n = parse_prox_kind(value);
    else if (key == "prox_a") cfg.proxes.a = parse_prox_kind(value);
    else throw std::invalid_argument("unknown config key: " + key);
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

// flat "key = value" file; '#' starts a comment; unknown keys are hard errors
void load_config_file(RunConfig& cfg, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument(path + ":" + std::to_string(lineno) +
                                        ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        apply_config_key(cfg, key, value);
    }
}

std::map<std::string, std::string> config_snapshot(const RunConfig& cfg) {
    const SolverConfig& s = cfg.solver;
    auto fmt = [](double v) {
        std::ostringstream os;
        os.precision(17);
        os << v;
        return os.str();
    };
    std::map<std::string, std::string> out;
    out["lambda_t"] = fmt(s.lambda_t);
    out["lambda_r"] = fmt(s.lambda_r);
    out["lambda_n"] = fmt(s.lambda_n);
    out["kappa"] = fmt(s.kappa);
    out["tau"] = fmt(s.tau);
    out["eta_t"] = fmt(s.eta_t);
    out["eta_r"] = fmt(s.eta_r);
    out["eta_n"] = fmt(s.eta_n);
    out["eta_a"] = fmt(s.eta_a);
    out["stages"] = std::to_string(s.stages);
    out["scales"] = std::to_string(s.scales);
    out["rel_tol"] = fmt(s.rel_tol);
    out["backtrack"] = s.backtrack ? "true" : "false";
    out["backtrack_beta"] = fmt(s.backtrack_beta);
    out["max_backtrack"] = std::to_string(s.max_backtrack);
    out["init_beta"] = fmt(s.init_beta);
    out["n"] = std::to_string(cfg.n);
    out["m"] = std::to_string(cfg.m);
    out["kernel_size"] = std::to_string(cfg.kernel_size);
    out["dict_seed"] = std::to_string(cfg.dict_seed);
    out["dict_scheme"] =
        cfg.dict_scheme == DictScheme::random_unit ? "random_unit" : "gradient_seeded";
    out["prox_t"] = prox_kind_name(cfg.proxes.t);
    out["prox_r"] = prox_kind_name(cfg.proxes.r);
    out["prox_n"] = prox_kind_name(cfg.proxes.n);
    out["prox_a"] = prox_kind_name(cfg.proxes.a);
    return out;
}

// ---------------------------------------------------------------------------
// manifests and reports
// ---------------------------------------------------------------------------

class Stopwatch {
  public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

  private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

void write_json_file(const fs::path& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

json metric_report_json(const MetricReport& r) {
    auto opt = [](const std::optional<double>& v) {
        return v ? json(*v) : json(nullptr);
    };
    json j;
    j["psnr_t"] = opt(r.psnr_t);
    j["psnr_r"] = opt(r.psnr_r);
    j["ssim_t"] = opt(r.ssim_t);
    j["ssim_r"] = opt(r.ssim_r);
    j["recon_l1"] = opt(r.recon_l1);
    j["aux_l1"] = opt(r.aux_l1);
    j["exact_match_t"] = r.exact_match_t;
    j["exact_match_r"] = r.exact_match_r;
    j["ssim_mode"] = MetricReport::ssim_mode;
    return j;
}

json manifest_base(const std::string& command, const RunConfig* cfg) {
    json j;
    j["command"] = command;
    j["tool_version"] = kToolVersion;
    if (cfg) j["config"] = config_snapshot(*cfg);
    return j;
}

int thread_cap() {
    const char* env = std::getenv("SIRRKIT_THREADS");
    if (!env) return static_cast<int>(std::thread::hardware_concurrency());
    try {
        const int v = static_cast<int>(parse_int(env));
        return v < 1 ? 1 : v;
    } catch (const std::exception&) {
        return 1;
    }
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

struct SynthArgs {
    std::string t_path, r_path, out_dir;
    std::optional<double> gamma1, gamma2;
    std::uint64_t seed = 0;
    std::string format = "png";
};

int cmd_synth(const SynthArgs& a) {
    Stopwatch watch;
    const Tensor3 t = read_image(a.t_path);
    const Tensor3 r = read_image(a.r_path);
    check_shape(t, r, "synth");

    BlendParams params = sample_blend_params(a.seed);
    if (a.gamma1) params.gamma1 = *a.gamma1;
    if (a.gamma2) params.gamma2 = *a.gamma2;
    params.validate();

    const Tensor3 i_unclamped = synthesize_blend_unclamped(t, r, params);
    const Tensor3 i = clamp01(i_unclamped);
    // N closes the formation identity I = T + R + N before clamping
    Tensor3 n(t.height, t.width, 3);
    for (std::size_t k = 0; k < n.size(); ++k)
        n.data[k] = i_unclamped.data[k] - t.data[k] - r.data[k];

    fs::create_directories(a.out_dir);
    const ImageFormat fmt = parse_format(a.format);
    const fs::path out(a.out_dir);
    write_image((out / (std::string("I") + format_extension(fmt))).string(), i, fmt);
    write_image((out / "N_unclamped.pfm").string(), n, ImageFormat::pfm);

    json manifest = manifest_base("synth", nullptr);
    manifest["inputs"] = {{"t", a.t_path}, {"r", a.r_path}};
    manifest["out_dir"] = a.out_dir;
    manifest["blend"] = {{"gamma1", params.gamma1},
                         {"gamma2", params.gamma2},
                         {"seed", params.seed}};
    manifest["format"] = a.format;
    manifest["duration_seconds"] = watch.seconds();
    write_json_file(out / "manifest.json", manifest);
    return kExitOk;
}

// ---------------------------------------------------------------------------
// separate
// ---------------------------------------------------------------------------

struct SeparateArgs {
    std::vector<std::string> inputs;
    std::string out_dir;
    std::string config_path;
    std::string manifest_path;
    std::optional<std::uint64_t> seed;
    std::optional<int> scales, stages;
    std::string format = "png";
};

void run_one_separation(const Tensor3& img, const RunConfig& cfg, const DictionarySet& dicts,
                        const fs::path& out, const std::string& format) {
    fs::create_directories(out);
    std::ofstream trace(out / "trace.jsonl");
    if (!trace) throw IoError("cannot write " + (out / "trace.jsonl").string());

    const SeparationResult res = solve_multiscale(
        img, dicts, cfg.solver, cfg.proxes, [&](const StageRecord& r) {
            json j;
            j["scale"] = r.scale;
            j["stage"] = r.stage;
            j["objective"] = r.objective;
            j["recon_term"] = r.recon_term;
            j["equality_term"] = r.equality_term;
            j["sparse_term"] = r.sparse_term;
            j["exclusion_term"] = r.exclusion_term;
            j["eta_t"] = r.eta_t;
            j["eta_r"] = r.eta_r;
            j["eta_n"] = r.eta_n;
            j["eta_a"] = r.eta_a;
            trace << j.dump() << "\n";
        });
    trace.close();

    const ImageFormat fmt = parse_format(format);
    auto emit = [&](const char* stem, const Tensor3& t) {
        const std::string name = std::string(stem) + format_extension(fmt);
        if (fmt == ImageFormat::pfm)
            write_image((out / name).string(), t, fmt);
        else
            write_image((out / name).string(), clamp01(t), fmt);
    };
    emit("T_hat", res.t_hat);
    emit("R_hat", res.r_hat);
    emit("N_hat", res.n_hat);
    emit("residual", res.residual);

    MetricReport report;
    report.recon_l1 = res.recon_l1;
    report.aux_l1 = res.aux_l1;
    write_json_file(out / "report.json", metric_report_json(report));
}

int cmd_separate(SeparateArgs a) {
    Stopwatch watch;
    RunConfig cfg;

    if (!a.manifest_path.empty()) {
        std::ifstream in(a.manifest_path);
        if (!in) throw IoError("cannot open manifest " + a.manifest_path);
        json m = json::parse(in);
        if (m.value("command", "") != "separate")
            throw std::invalid_argument("manifest is not a separate run");
        for (const auto& [key, value] : m.at("config").items())
            apply_config_key(cfg, key, value.get<std::string>());
        if (a.inputs.empty() && m.contains("inputs"))
            for (const auto& v : m.at("inputs")) a.inputs.push_back(v.get<std::string>());
        if (a.out_dir.empty() && m.contains("out_dir"))
            a.out_dir = m.at("out_dir").get<std::string>();
        if (m.contains("format") && a.format == "png")
            a.format = m.at("format").get<std::string>();
    }
    if (!a.config_path.empty()) load_config_file(cfg, a.config_path);
    if (a.seed) cfg.dict_seed = *a.seed;
    if (a.scales) cfg.solver.scales = *a.scales;
    if (a.stages) cfg.solver.stages = *a.stages;
    if (a.inputs.empty()) throw std::invalid_argument("separate: no input image given");
    if (a.out_dir.empty()) throw std::invalid_argument("separate: --out is required");
    cfg.solver.validate();

    const DictionarySet dicts =
        init_dictionaries(cfg.n, cfg.m, cfg.kernel_size, cfg.dict_seed, cfg.dict_scheme);

    std::vector<Tensor3> images;
    images.reserve(a.inputs.size());
    for (const std::string& p : a.inputs) images.push_back(read_image(p));

    const fs::path out(a.out_dir);
    fs::create_directories(out);

    if (images.size() == 1) {
        run_one_separation(images[0], cfg, dicts, out, a.format);
    } else {
        // independent solves on worker threads, one output directory each
        const int workers =
            std::min<int>(thread_cap(), static_cast<int>(images.size()));
        std::vector<std::thread> pool;
        std::mutex error_mutex;
        std::vector<std::string> errors;
        std::atomic<std::size_t> next{0};
        for (int w = 0; w < workers; ++w)
            pool.emplace_back([&]() {
                for (std::size_t k = next.fetch_add(1); k < images.size();
                     k = next.fetch_add(1)) {
                    try {
                        const fs::path sub = out / fs::path(a.inputs[k]).stem();
                        run_one_separation(images[k], cfg, dicts, sub, a.format);
                    } catch (const std::exception& e) {
                        std::lock_guard<std::mutex> lock(error_mutex);
                        errors.emplace_back(a.inputs[k] + ": " + e.what());
                    }
                }
            });
        for (std::thread& t : pool) t.join();
        if (!errors.empty()) throw std::runtime_error(errors.front());
    }

    json manifest = manifest_base("separate", &cfg);
    manifest["inputs"] = a.inputs;
    manifest["out_dir"] = a.out_dir;
    manifest["format"] = a.format;
    manifest["duration_seconds"] = watch.seconds();
    write_json_file(out / "manifest.json", manifest);
    return kExitOk;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalArgs {
    std::string t_hat, r_hat, t_gt, i_path;
    std::string r_gt, n_hat;
    std::string out = "report.json";
};

int cmd_eval(const EvalArgs& a) {
    const Tensor3 t_hat = read_image(a.t_hat);
    const Tensor3 r_hat = read_image(a.r_hat);
    const Tensor3 t_gt = read_image(a.t_gt);
    const Tensor3 i = read_image(a.i_path);
    check_shape(t_hat, t_gt, "eval");
    check_shape(r_hat, i, "eval");
    check_shape(t_gt, i, "eval");

    const Tensor3 r_ref = a.r_gt.empty() ? reflection_reference(i, t_gt) : read_image(a.r_gt);
    check_shape(r_hat, r_ref, "eval");

    MetricReport rep;
    const PsnrResult pt = psnr(t_hat, t_gt);
    const PsnrResult pr = psnr(r_hat, r_ref);
    rep.psnr_t = pt.value;
    rep.psnr_r = pr.value;
    rep.exact_match_t = pt.exact_match;
    rep.exact_match_r = pr.exact_match;
    rep.ssim_t = ssim(t_hat, t_gt);
    rep.ssim_r = ssim(r_hat, r_ref);
    if (!a.n_hat.empty()) {
        const Tensor3 n_hat = read_image(a.n_hat);
        check_shape(n_hat, i, "eval");
        double l1 = 0.0;
        for (std::size_t k = 0; k < i.size(); ++k)
            l1 += std::fabs(i.data[k] - t_hat.data[k] - r_hat.data[k] - n_hat.data[k]);
        rep.recon_l1 = l1 / (static_cast<double>(i.height) * i.width);
    }
    write_json_file(a.out, metric_report_json(rep));
    return kExitOk;
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

struct GradcheckArgs {
    std::uint64_t seed = 1;
    int size = 8;
    std::string out;
    bool flip_kernels = false;  // negative control: corrupt the adjoint
};

Tensor3 corrupted_transpose(const KernelBank& k, const Tensor3& in) {
    // spatially flipped taps; breaks adjointness for asymmetric kernels
    KernelBank flipped = k;
    for (int o = 0; o < k.out_channels; ++o)
        for (int c = 0; c < k.in_channels; ++c)
            for (int ky = 0; ky < k.kernel_size; ++ky)
                for (int kx = 0; kx < k.kernel_size; ++kx)
                    flipped.at(o, c, ky, kx) =
                        k.at(o, c, k.kernel_size - 1 - ky, k.kernel_size - 1 - kx);
    return conv_transpose(flipped, in);
}

int cmd_gradcheck(const GradcheckArgs& a) {
    if (a.size < 2 || a.size > 16)
        throw std::invalid_argument("gradcheck: size must be in [2, 16]");

    std::ostringstream table;
    table << "check                            rel_error   bound\n";
    bool ok = true;
    std::string first_failure;

    // adjointness suite
    Rng rng(a.seed);
    double worst_adj = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const int ks = 1 + 2 * static_cast<int>(rng.uniform() * 3);
        const int cin = 1 + static_cast<int>(rng.uniform() * 4);
        const int cout = 1 + static_cast<int>(rng.uniform() * 4);
        KernelBank k(ks, cin, cout);
        for (double& w : k.weights) w = rng.normal();
        Tensor3 z(a.size, a.size, cin), y(a.size, a.size, cout);
        for (double& v : z.data) v = rng.normal();
        for (double& v : y.data) v = rng.normal();
        const double lhs = dot(conv_forward(k, z), y);
        const double rhs = dot(z, conv_transpose(k, y));
        const double denom = frob_norm(z) * frob_norm(y) * kernel_frob_norm(k) + 1e-300;
        worst_adj = std::max(worst_adj, std::fabs(lhs - rhs) / denom);
    }
    table << "adjointness (20 cases)           " << worst_adj << "   1e-10\n";
    if (worst_adj > 1e-10) {
        ok = false;
        first_failure = "adjointness";
    }

    // analytic vs central finite differences on the smooth objective
    const DictionarySet dicts = init_dictionaries(3, 3, 3, a.seed + 1, DictScheme::random_unit);
    SolverConfig cfg;
    cfg.tau = 0.3;
    SolverState st;
    st.z_t = Tensor3(a.size, a.size, 3);
    st.z_r = Tensor3(a.size, a.size, 3);
    st.z_n = Tensor3(a.size, a.size, 3);
    st.z_a = Tensor3(a.size, a.size, 3);
    Tensor3 img(a.size, a.size, 3);
    for (double& v : img.data) v = rng.uniform();
    for (double& v : st.z_t.data) v = 0.5 * rng.normal();
    for (double& v : st.z_r.data) v = 0.5 * rng.normal();
    for (double& v : st.z_n.data) v = 0.5 * rng.normal();
    for (double& v : st.z_a.data) v = 0.5 * rng.normal();

    SolverConfig smooth = cfg;  // only recon + equality terms contribute
    smooth.lambda_t = smooth.lambda_r = smooth.lambda_n = smooth.kappa = 0.0;
    auto smooth_value = [&](const SolverState& s) { return objective(img, dicts, s, smooth); };

    auto fd_check = [&](const char* name, const Tensor3& analytic, Tensor3 SolverState::*field,
                        bool divide_tau) {
        const double step = 1e-6;
        SolverState probe = st;
        Tensor3& target = probe.*field;
        double num = 0.0, den = 0.0;
        for (std::size_t k = 0; k < target.size(); ++k) {
            const double saved = target.data[k];
            target.data[k] = saved + step;
            const double fp = smooth_value(probe);
            target.data[k] = saved - step;
            const double fm = smooth_value(probe);
            target.data[k] = saved;
            double g = (fp - fm) / (2.0 * step);
            if (divide_tau) g /= cfg.tau;
            const double diff = analytic.data[k] - g;
            num += diff * diff;
            den += g * g;
        }
        const double rel = std::sqrt(num) / std::max(std::sqrt(den), 1e-30);
        table << name << "   " << rel << "   1e-5\n";
        if (rel > 1e-5) {
            if (ok) first_failure = name;
            ok = false;
        }
    };

    Tensor3 gt = a.flip_kernels
                     ? [&]() {
                           Tensor3 g = corrupted_transpose(
                               dicts.d_t,
                               reconstruction_residual(img, dicts, st.z_t, st.z_r, st.z_n));
                           for (double& v : g.data) v = -v;
                           const Tensor3 mr = conv_forward(dicts.m_r, st.z_r);
                           const Tensor3 mt = conv_forward(dicts.m_t, st.z_t);
                           Tensor3 gap = elementwise(
                               st.z_a, elementwise(mt, mr, ElemOp::mul), ElemOp::sub);
                           gap = elementwise(mr, gap, ElemOp::mul);
                           const Tensor3 gq = corrupted_transpose(dicts.m_t, gap);
                           for (std::size_t k = 0; k < g.size(); ++k)
                               g.data[k] -= cfg.tau * gq.data[k];
                           return g;
                       }()
                     : grad_zt(img, dicts, st, cfg);
    fd_check("grad_zt                       ", gt, &SolverState::z_t, false);
    fd_check("grad_zr                       ", grad_zr(img, dicts, st, cfg), &SolverState::z_r,
             false);
    fd_check("grad_zn                       ", grad_zn(img, dicts, st, cfg), &SolverState::z_n,
             false);
    fd_check("grad_za                       ", grad_za(dicts, st, cfg), &SolverState::z_a, true);

    std::cout << table.str();
    if (!a.out.empty()) {
        fs::path out(a.out);
        if (!out.parent_path().empty()) fs::create_directories(out.parent_path());
        std::ofstream f(out);
        if (!f) throw IoError("cannot write " + a.out);
        f << table.str();
    }
    if (!ok) {
        std::cerr << "gradcheck failed: " << first_failure << "\n";
        return kExitVerification;
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------
// trace-plot
// ---------------------------------------------------------------------------

struct TracePlotArgs {
    std::string trace_path;
    std::string out = "trace.svg";
};

int cmd_trace_plot(const TracePlotArgs& a) {
    std::ifstream in(a.trace_path);
    if (!in) throw IoError("cannot open trace " + a.trace_path);
    std::vector<double> objective;
    std::vector<int> scales;
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        const json j = json::parse(line);
        objective.push_back(j.at("objective").get<double>());
        scales.push_back(j.value("scale", 1));
    }
    if (objective.empty()) throw std::invalid_argument("trace has no records");

    const int width = 720, height = 400, margin = 50;
    double lo = objective[0], hi = objective[0];
    for (double v : objective) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (hi <= lo) hi = lo + 1.0;

    auto px = [&](std::size_t k) {
        return margin + (width - 2.0 * margin) * (objective.size() == 1
                                                      ? 0.0
                                                      : static_cast<double>(k) /
                                                            (objective.size() - 1));
    };
    auto py = [&](double v) {
        return height - margin - (height - 2.0 * margin) * (v - lo) / (hi - lo);
    };

    std::ostringstream svg;
    svg.precision(17);
    svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='" << height
        << "'>\n";
    svg << "<rect width='100%' height='100%' fill='white'/>\n";
    svg << "<line x1='" << margin << "' y1='" << height - margin << "' x2='" << width - margin
        << "' y2='" << height - margin << "' stroke='black'/>\n";
    svg << "<line x1='" << margin << "' y1='" << margin << "' x2='" << margin << "' y2='"
        << height - margin << "' stroke='black'/>\n";
    // scale boundaries
    for (std::size_t k = 1; k < scales.size(); ++k)
        if (scales[k] != scales[k - 1])
            svg << "<line x1='" << px(k) << "' y1='" << margin << "' x2='" << px(k) << "' y2='"
                << height - margin << "' stroke='#bbbbbb' stroke-dasharray='4 3'/>\n";
    svg << "<polyline fill='none' stroke='#1f77b4' stroke-width='1.5' points='";
    for (std::size_t k = 0; k < objective.size(); ++k)
        svg << px(k) << "," << py(objective[k]) << " ";
    svg << "'/>\n";
    svg << "<text x='" << margin << "' y='" << margin - 10
        << "' font-family='monospace' font-size='12'>objective, " << objective.size()
        << " stages (min " << lo << ", max " << hi << ")</text>\n";
    svg << "</svg>\n";

    std::ofstream out(a.out);
    if (!out) throw IoError("cannot write " + a.out);
    out << svg.str();
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"reflection separation with convolutional sparse coding"};
    app.require_subcommand(1);

    SynthArgs synth;
    CLI::App* s = app.add_subcommand("synth", "blend a transmission/reflection pair");
    s->add_option("--t", synth.t_path, "transmission image")->required();
    s->add_option("--r", synth.r_path, "reflection image")->required();
    s->add_option("--out", synth.out_dir, "output directory")->required();
    s->add_option("--gamma1", synth.gamma1, "blend weight for T in [0.8, 1.0]");
    s->add_option("--gamma2", synth.gamma2, "blend weight for R in [0.4, 1.0]");
    s->add_option("--seed", synth.seed, "seed for sampling blend weights");
    s->add_option("--format", synth.format, "png|ppm|pfm")->default_val("png");

    SeparateArgs sep;
    CLI::App* p = app.add_subcommand("separate", "run the multiscale solver on an image");
    p->add_option("input", sep.inputs, "input image(s)");
    p->add_option("--out", sep.out_dir, "output directory");
    p->add_option("--config", sep.config_path, "key = value config file");
    p->add_option("--manifest", sep.manifest_path, "re-run from a previous manifest");
    p->add_option("--seed", sep.seed, "dictionary seed");
    p->add_option("--scales", sep.scales, "pyramid levels");
    p->add_option("--stages", sep.stages, "stages per level");
    p->add_option("--format", sep.format, "png|ppm|pfm")->default_val("png");

    EvalArgs ev;
    CLI::App* e = app.add_subcommand("eval", "score a separation against ground truth");
    e->add_option("--t-hat", ev.t_hat)->required();
    e->add_option("--r-hat", ev.r_hat)->required();
    e->add_option("--t-gt", ev.t_gt)->required();
    e->add_option("--i", ev.i_path)->required();
    e->add_option("--r-gt", ev.r_gt, "optional; defaults to clamp(I - T_gt)");
    e->add_option("--n-hat", ev.n_hat, "optional; enables the recon_l1 field");
    e->add_option("--out", ev.out)->default_val("report.json");

    GradcheckArgs gc;
    CLI::App* g = app.add_subcommand("gradcheck", "verify gradients and adjointness");
    g->add_option("--seed", gc.seed)->default_val(1);
    g->add_option("--size", gc.size, "instance size, at most 16")->default_val(8);
    g->add_option("--out", gc.out, "write the error table to this file");
    g->add_flag("--flip-kernels", gc.flip_kernels,
                "debug: corrupt the adjoint to exercise the failure path");

    TracePlotArgs tp;
    CLI::App* t = app.add_subcommand("trace-plot", "render a trace.jsonl objective curve");
    t->add_option("--trace", tp.trace_path)->required();
    t->add_option("--out", tp.out)->default_val("trace.svg");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        return app.exit(err) == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*s) return cmd_synth(synth);
        if (*p) return cmd_separate(sep);
        if (*e) return cmd_eval(ev);
        if (*g) return cmd_gradcheck(gc);
        if (*t) return cmd_trace_plot(tp);
    } catch (const DivergenceError& err) {
        std::cerr << "error: " << err.what() << "\n";
        return kExitDivergence;
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << "\n";
        return kExitUsage;
    }
    return kExitUsage;
}
