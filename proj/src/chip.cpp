#include "mmelm/chip.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mmelm/error.hpp"
#include "mmelm/rng.hpp"

namespace mmelm {

namespace {

void require_positive(double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v))
        throw ConfigError(std::string("chip config: ") + name + " must be positive and finite");
}

}  // namespace

void ChipConfig::validate() const {
    require_positive(u_t, "u_t");
    require_positive(vdd, "vdd");
    require_positive(c_b, "c_b");
    require_positive(i_rst, "i_rst");
    require_positive(i_ref, "i_ref");
    require_positive(i_max, "i_max");
    require_positive(t_neu, "t_neu");
    require_positive(kappa, "kappa");
    require_positive(c_mirror, "c_mirror");
    require_positive(vdd_nominal, "vdd_nominal");
    if (!(sigma_vt >= 0.0) || !std::isfinite(sigma_vt))
        throw ConfigError("chip config: sigma_vt must be non-negative");
    if (!(i_lk >= 0.0)) throw ConfigError("chip config: i_lk must be >= 0");
    if (!(neuron_gain_sigma >= 0.0)) throw ConfigError("chip config: neuron_gain_sigma must be >= 0");
    if (!(min_frequency >= 0.0)) throw ConfigError("chip config: min_frequency must be >= 0");
    if (b < 1 || b > 14) throw ConfigError("chip config: b must be in 1..14");
    if (b_in != 10) throw ConfigError("chip config: b_in is fixed at 10");
    if (d < 1) throw ConfigError("chip config: d must be >= 1");
    if (l < 1) throw ConfigError("chip config: l must be >= 1");
    if (bias_row && (bias_code < 0 || bias_code > code_max()))
        throw ConfigError("chip config: bias_code out of range");
}

ChipConfig ChipConfig::nominal(int d, int l, double i_max) {
    ChipConfig cfg;
    cfg.d = d;
    cfg.l = l;
    cfg.i_max = i_max;
    cfg.i_ref = i_max * 1024.0 / 1023.0;
    cfg.i_rst = 4.0 * d * i_max;
    return cfg;
}

ChipConfig ChipConfig::at_supply(double new_vdd) const {
    ChipConfig out = *this;
    out.vdd = new_vdd;
    out.i_rst = i_rst * std::pow(new_vdd / vdd, i_rst_vdd_exponent);
    return out;
}

ChipConfig ChipConfig::with_saturation_ratio(double ratio) const {
    if (!(ratio > 0.0)) throw ConfigError("saturation ratio must be positive");
    ChipConfig out = *this;
    out.t_neu = static_cast<double>(count_limit()) / (ratio * k_neu() * d * i_max);
    return out;
}

nlohmann::json to_json(const ChipConfig& cfg) {
    return nlohmann::json{
        {"sigma_vt", cfg.sigma_vt},
        {"u_t", cfg.u_t},
        {"vdd", cfg.vdd},
        {"c_b", cfg.c_b},
        {"i_rst", cfg.i_rst},
        {"i_lk", cfg.i_lk},
        {"i_ref", cfg.i_ref},
        {"i_max", cfg.i_max},
        {"t_neu", cfg.t_neu},
        {"b", cfg.b},
        {"b_in", cfg.b_in},
        {"d", cfg.d},
        {"l", cfg.l},
        {"kappa", cfg.kappa},
        {"c_mirror", cfg.c_mirror},
        {"seed", cfg.seed},
        {"neuron_model", cfg.neuron_model == NeuronModel::linear ? "linear" : "quadratic"},
        {"min_frequency", cfg.min_frequency},
        {"neuron_gain_sigma", cfg.neuron_gain_sigma},
        {"bias_row", cfg.bias_row},
        {"bias_code", cfg.bias_code},
        {"i_rst_vdd_exponent", cfg.i_rst_vdd_exponent},
        {"vdd_nominal", cfg.vdd_nominal},
    };
}

ChipConfig chip_config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("chip config: expected a JSON object");
    const int d = j.value("d", 128);
    const int l = j.value("l", 128);
    const double i_max = j.value("i_max", 1e-9);
    ChipConfig cfg = ChipConfig::nominal(d, l, i_max);
    try {
        cfg.sigma_vt = j.value("sigma_vt", cfg.sigma_vt);
        cfg.u_t = j.value("u_t", cfg.u_t);
        cfg.vdd = j.value("vdd", cfg.vdd);
        cfg.c_b = j.value("c_b", cfg.c_b);
        cfg.i_rst = j.value("i_rst", cfg.i_rst);
        cfg.i_lk = j.value("i_lk", cfg.i_lk);
        cfg.i_ref = j.value("i_ref", cfg.i_ref);
        cfg.t_neu = j.value("t_neu", cfg.t_neu);
        cfg.b = j.value("b", cfg.b);
        cfg.b_in = j.value("b_in", cfg.b_in);
        cfg.kappa = j.value("kappa", cfg.kappa);
        cfg.c_mirror = j.value("c_mirror", cfg.c_mirror);
        cfg.seed = j.value("seed", cfg.seed);
        const std::string model = j.value("neuron_model", std::string("quadratic"));
        if (model == "quadratic")
            cfg.neuron_model = NeuronModel::quadratic;
        else if (model == "linear")
            cfg.neuron_model = NeuronModel::linear;
        else
            throw ConfigError("chip config: unknown neuron_model '" + model + "'");
        cfg.min_frequency = j.value("min_frequency", cfg.min_frequency);
        cfg.neuron_gain_sigma = j.value("neuron_gain_sigma", cfg.neuron_gain_sigma);
        cfg.bias_row = j.value("bias_row", cfg.bias_row);
        cfg.bias_code = j.value("bias_code", cfg.bias_code);
        cfg.i_rst_vdd_exponent = j.value("i_rst_vdd_exponent", cfg.i_rst_vdd_exponent);
        cfg.vdd_nominal = j.value("vdd_nominal", cfg.vdd_nominal);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("chip config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

ChipConfig load_chip_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open chip config " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("chip config " + path.string() + ": " + e.what());
    }
    return chip_config_from_json(j);
}

// ---------------------------------------------------------------------------

WeightMatrix::WeightMatrix(Eigen::MatrixXd delta_vt, double u_t, double sigma_vt_used,
                           std::uint64_t seed_used, Eigen::VectorXd neuron_gain)
    : delta_vt_(std::move(delta_vt)),
      neuron_gain_(std::move(neuron_gain)),
      u_t_(u_t),
      sigma_vt_used_(sigma_vt_used),
      seed_used_(seed_used) {
    if (!(u_t > 0.0)) throw ConfigError("weight matrix: u_t must be positive");
    entries_ = (delta_vt_.array() / u_t_).exp().matrix();
    if (neuron_gain_.size() == 0) neuron_gain_ = Eigen::VectorXd::Ones(delta_vt_.cols());
    if (neuron_gain_.size() != delta_vt_.cols())
        throw ShapeError("weight matrix: neuron gain length must equal column count");
}

WeightMatrix WeightMatrix::from_entries(const Eigen::MatrixXd& entries, double u_t) {
    if (!(entries.array() > 0.0).all())
        throw DomainError("weight matrix: entries must be strictly positive");
    WeightMatrix w;
    w.entries_ = entries;
    w.delta_vt_ = (entries.array().log() * u_t).matrix();
    w.neuron_gain_ = Eigen::VectorXd::Ones(entries.cols());
    w.u_t_ = u_t;
    return w;
}

WeightMatrix WeightMatrix::with_thermal_voltage(double u_t) const {
    WeightMatrix w = *this;
    if (!(u_t > 0.0)) throw DomainError("thermal voltage must be positive");
    w.u_t_ = u_t;
    w.entries_ = (delta_vt_.array() / u_t).exp().matrix();
    return w;
}

WeightMatrix WeightMatrix::remapped(std::span<const int> row_map,
                                    std::span<const int> col_map) const {
    WeightMatrix w = *this;
    const auto r = static_cast<Eigen::Index>(row_map.size());
    const auto c = static_cast<Eigen::Index>(col_map.size());
    w.entries_.resize(r, c);
    w.delta_vt_.resize(r, c);
    w.neuron_gain_.resize(c);
    for (Eigen::Index j = 0; j < c; ++j) {
        w.neuron_gain_(j) = neuron_gain_(col_map[j]);
        for (Eigen::Index i = 0; i < r; ++i) {
            w.entries_(i, j) = entries_(row_map[i], col_map[j]);
            w.delta_vt_(i, j) = delta_vt_(row_map[i], col_map[j]);
        }
    }
    return w;
}

std::string weights_csv(const WeightMatrix& w) {
    std::ostringstream out;
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (int i = 0; i < w.rows(); ++i) {
        for (int j = 0; j < w.cols(); ++j) {
            if (j) out << ',';
            out << w(i, j);
        }
        out << '\n';
    }
    return out.str();
}

void write_weights_csv(const WeightMatrix& w, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << weights_csv(w);
    if (!out) throw IoError("write failed for " + path.string());
}

// ---------------------------------------------------------------------------

double dac_current(int data_in, double i_ref) {
    if (data_in < 0 || data_in > 1023)
        throw DomainError("dac_current: data_in " + std::to_string(data_in) + " outside 0..1023");
    double sum = 0.0;
    for (int k = 0; k < 10; ++k)
        if (data_in & (1 << k)) sum += std::ldexp(1.0, k - 10);
    return i_ref * sum;
}

SwitchState mirror_switch_state(int data_in) {
    if (data_in < 0 || data_in > 1023)
        throw DomainError("mirror_switch_state: data_in " + std::to_string(data_in) +
                          " outside 0..1023");
    return SwitchState{(data_in & 0x3C0) == 0, data_in == 0};
}

double neuron_frequency(double i_z, const ChipConfig& cfg) {
    if (!(i_z >= 0.0)) throw DomainError("neuron_frequency: i_z must be non-negative");
    if (cfg.neuron_model == NeuronModel::linear) return cfg.k_neu() * i_z;
    if (cfg.i_lk > 0.0) {
        if (i_z <= cfg.i_lk || i_z >= cfg.i_rst + cfg.i_lk) return 0.0;
        return 1.0 / (cfg.c_b * cfg.vdd *
                      (1.0 / (i_z - cfg.i_lk) + 1.0 / (cfg.i_rst - i_z + cfg.i_lk)));
    }
    if (i_z >= cfg.i_rst) return 0.0;
    const double f = i_z * (cfg.i_rst - i_z) / (cfg.i_rst * cfg.c_b * cfg.vdd);
    return f > 0.0 ? f : 0.0;
}

double neuron_period(double i_z, const ChipConfig& cfg) {
    if (!(i_z > cfg.i_lk) || !(i_z < cfg.i_rst + cfg.i_lk))
        throw NoOscillationError("neuron_period: input current outside (I_lk, I_rst + I_lk)");
    const double t = cfg.c_b * cfg.vdd * (1.0 / (i_z - cfg.i_lk) + 1.0 / (cfg.i_rst - i_z + cfg.i_lk));
    if (cfg.min_frequency > 0.0 && 1.0 / t < cfg.min_frequency)
        throw NoOscillationError("neuron_period: frequency below configured minimum");
    return t;
}

std::int64_t hidden_count(double i_z, const ChipConfig& cfg, double gain) {
    const double f = neuron_frequency(i_z, cfg) * gain;
    const double n = std::floor(f * cfg.t_neu);
    const auto limit = cfg.count_limit();
    if (n >= static_cast<double>(limit)) return limit;
    return static_cast<std::int64_t>(n);
}

NeuronState neuron_state(double i_z, const ChipConfig& cfg, double gain) {
    return NeuronState{i_z, neuron_frequency(i_z, cfg) * gain, hidden_count(i_z, cfg, gain)};
}

WeightMatrix sample_mismatch(const ChipConfig& cfg) {
    cfg.validate();
    Rng rng(derive_seed({cfg.seed, kWeightStream}));
    Eigen::MatrixXd dvt(cfg.rows(), cfg.l);
    // row-major draw order keeps matrices for different L prefix-compatible per row
    for (int i = 0; i < cfg.rows(); ++i)
        for (int j = 0; j < cfg.l; ++j) dvt(i, j) = cfg.sigma_vt * rng.normal();
    Eigen::VectorXd gain = Eigen::VectorXd::Ones(cfg.l);
    if (cfg.neuron_gain_sigma > 0.0) {
        Rng grng(derive_seed({cfg.seed, kNeuronGainStream}));
        for (int j = 0; j < cfg.l; ++j) gain(j) = std::exp(cfg.neuron_gain_sigma * grng.normal());
    }
    return WeightMatrix(std::move(dvt), cfg.u_t, cfg.sigma_vt, cfg.seed, std::move(gain));
}

int map_value(double x, const ChipConfig& cfg) {
    if (std::isnan(x)) throw DomainError("map_input: NaN input");
    const double clipped = x < -1.0 ? -1.0 : (x > 1.0 ? 1.0 : x);
    return static_cast<int>(std::floor((clipped + 1.0) / 2.0 * cfg.code_max() + 0.5));
}

MappedInput map_input(std::span<const double> x, const ChipConfig& cfg) {
    MappedInput out;
    out.codes.reserve(x.size());
    for (double v : x) {
        out.codes.push_back(map_value(v, cfg));
        if (v < -1.0 || v > 1.0) out.clamped = true;
    }
    return out;
}

std::vector<int> input_codes(std::span<const double> x, const ChipConfig& cfg) {
    if (static_cast<int>(x.size()) != cfg.d)
        throw ShapeError("input has dimension " + std::to_string(x.size()) + ", chip expects " +
                         std::to_string(cfg.d));
    auto codes = map_input(x, cfg).codes;
    if (cfg.bias_row) codes.push_back(cfg.bias_code);
    return codes;
}

Eigen::VectorXd column_currents(std::span<const int> codes, const WeightMatrix& w,
                                const ChipConfig& cfg) {
    if (static_cast<int>(codes.size()) != w.rows())
        throw ShapeError("code vector has length " + std::to_string(codes.size()) +
                         ", weight matrix has " + std::to_string(w.rows()) + " rows");
    Eigen::VectorXd i_z = Eigen::VectorXd::Zero(w.cols());
    for (int i = 0; i < w.rows(); ++i) {
        if (codes[i] == 0) continue;  // S2 closed: row shut off
        const double i_in = dac_current(codes[i], cfg.i_ref);
        i_z += i_in * w.entries().row(i).transpose();
    }
    return i_z;
}

std::vector<std::int64_t> forward_codes(std::span<const int> codes, const WeightMatrix& w,
                                        const ChipConfig& cfg) {
    const Eigen::VectorXd i_z = column_currents(codes, w, cfg);
    std::vector<std::int64_t> out(static_cast<std::size_t>(w.cols()));
    for (int j = 0; j < w.cols(); ++j) out[j] = hidden_count(i_z(j), cfg, w.neuron_gain()(j));
    return out;
}

std::vector<std::int64_t> forward(std::span<const double> x, const WeightMatrix& w,
                                  const ChipConfig& cfg) {
    return forward_codes(input_codes(x, cfg), w, cfg);
}

}  // namespace mmelm
