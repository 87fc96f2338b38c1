#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <nlohmann/json.hpp>

#include "mmelm/analysis.hpp"
#include "mmelm/chip.hpp"
#include "mmelm/dataset.hpp"
#include "mmelm/elm.hpp"
#include "mmelm/error.hpp"
#include "mmelm/expansion.hpp"
#include "mmelm/explorer.hpp"

namespace py = pybind11;
using namespace mmelm;

namespace {

// Reports and configs cross the boundary as JSON text; the Python side parses them.
std::string dump(const nlohmann::json& j) { return j.dump(); }

}  // namespace

PYBIND11_MODULE(_mmelm, m) {
    m.doc() = "Mismatch-based analog ELM chip simulator";

    static py::exception<Error> base_error(m, "MmelmError");
    static py::exception<ConfigError> config_error(m, "ConfigError", base_error.ptr());
    static py::exception<DomainError> domain_error(m, "DomainError", base_error.ptr());
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const ConfigError& e) {
            py::set_error(config_error, e.what());
        } catch (const DomainError& e) {
            py::set_error(domain_error, e.what());
        } catch (const Error& e) {
            py::set_error(base_error, e.what());
        }
    });

    py::enum_<NeuronModel>(m, "NeuronModel")
        .value("quadratic", NeuronModel::quadratic)
        .value("linear", NeuronModel::linear);

    py::class_<ChipConfig>(m, "ChipConfig")
        .def(py::init<>())
        .def_static("nominal", &ChipConfig::nominal, py::arg("d"), py::arg("l"), py::arg("i_max") = 1e-9)
        .def_readwrite("sigma_vt", &ChipConfig::sigma_vt)
        .def_readwrite("u_t", &ChipConfig::u_t)
        .def_readwrite("vdd", &ChipConfig::vdd)
        .def_readwrite("c_b", &ChipConfig::c_b)
        .def_readwrite("i_rst", &ChipConfig::i_rst)
        .def_readwrite("i_lk", &ChipConfig::i_lk)
        .def_readwrite("i_ref", &ChipConfig::i_ref)
        .def_readwrite("i_max", &ChipConfig::i_max)
        .def_readwrite("t_neu", &ChipConfig::t_neu)
        .def_readwrite("b", &ChipConfig::b)
        .def_readwrite("d", &ChipConfig::d)
        .def_readwrite("l", &ChipConfig::l)
        .def_readwrite("kappa", &ChipConfig::kappa)
        .def_readwrite("c_mirror", &ChipConfig::c_mirror)
        .def_readwrite("seed", &ChipConfig::seed)
        .def_readwrite("neuron_model", &ChipConfig::neuron_model)
        .def_readwrite("bias_row", &ChipConfig::bias_row)
        .def("k_neu", &ChipConfig::k_neu)
        .def("i_flx", &ChipConfig::i_flx)
        .def("count_limit", &ChipConfig::count_limit)
        .def("validate", &ChipConfig::validate)
        .def("at_supply", &ChipConfig::at_supply, py::arg("vdd"))
        .def("with_saturation_ratio", &ChipConfig::with_saturation_ratio, py::arg("ratio"))
        .def("to_json", [](const ChipConfig& c) { return dump(to_json(c)); })
        .def_static("from_json", [](const std::string& s) { return chip_config_from_json(nlohmann::json::parse(s)); });

    py::class_<WeightMatrix>(m, "WeightMatrix")
        .def_static("from_entries", &WeightMatrix::from_entries, py::arg("entries"), py::arg("u_t") = 0.025)
        .def_property_readonly("entries", &WeightMatrix::entries)
        .def_property_readonly("delta_vt", &WeightMatrix::delta_vt)
        .def_property_readonly("shape", [](const WeightMatrix& w) { return py::make_tuple(w.rows(), w.cols()); })
        .def("with_thermal_voltage", &WeightMatrix::with_thermal_voltage, py::arg("u_t"));

    m.def("dac_current", &dac_current, py::arg("code"), py::arg("i_ref"));
    m.def("neuron_frequency", &neuron_frequency, py::arg("i_z"), py::arg("cfg"));
    m.def("hidden_count", &hidden_count, py::arg("i_z"), py::arg("cfg"), py::arg("gain") = 1.0);
    m.def("sample_mismatch", &sample_mismatch, py::arg("cfg"));
    m.def("forward", [](const std::vector<double>& x, const WeightMatrix& w, const ChipConfig& cfg) {
        return forward(x, w, cfg);
    }, py::arg("x"), py::arg("w"), py::arg("cfg"));

    m.def("build_hidden_matrix", [](const Eigen::MatrixXd& x, const WeightMatrix& w, const ChipConfig& cfg) {
        return build_hidden_matrix(x, w, cfg).values;
    }, py::arg("features"), py::arg("w"), py::arg("cfg"));
    m.def("train", [](const Eigen::MatrixXd& h, const Eigen::VectorXd& t, double c, double feature_scale) {
        TrainOptions opts;
        opts.feature_scale = feature_scale;
        return train_output_weights(h, t, c, opts).beta;
    }, py::arg("h"), py::arg("t"), py::arg("c"), py::arg("feature_scale") = 1.0);
    m.def("predict", [](const Eigen::MatrixXd& h, const Eigen::VectorXd& beta) {
        OutputWeights w;
        w.beta = beta;
        return predict_all(h, w);
    }, py::arg("h"), py::arg("beta"));
    m.def("normalize_hidden", [](const std::vector<double>& h, const std::vector<double>& x) {
        return normalize_hidden(h, x).values;
    }, py::arg("h_row"), py::arg("x"));

    m.def("build_virtual_matrix", [](const WeightMatrix& w, int d, int l) {
        return build_virtual_matrix(w, VirtualShape{w.rows(), w.cols(), d, l});
    }, py::arg("w"), py::arg("d"), py::arg("l"));

    m.def("generate_sinc", [](int n, double noise, std::uint64_t seed) {
        const Dataset ds = generate_sinc(n, noise, seed);
        return py::make_tuple(Eigen::VectorXd(ds.raw.col(0)), ds.targets, ds.clean);
    }, py::arg("n"), py::arg("noise"), py::arg("seed"), "Returns (x, noisy targets, clean targets).");

    m.def("default_chip", &default_chip, py::arg("d"), py::arg("l"), py::arg("sigma_vt") = 0.016,
          py::arg("ratio") = kSaturationRatio);
    m.def("default_sinc_chip", &default_sinc_chip, py::arg("l") = 128, py::arg("sigma_vt") = 0.016);
    m.def("run_regression", [](const ChipConfig& cfg, int trials, std::uint64_t seed, int train_n, int test_n,
                               double noise) {
        SincSpec spec;
        spec.train_n = train_n;
        spec.test_n = test_n;
        spec.noise = noise;
        return dump(run_regression(spec, cfg, trials, seed).to_json());
    }, py::arg("cfg"), py::arg("trials") = 1, py::arg("seed") = 1, py::arg("train_n") = 5000,
       py::arg("test_n") = 1000, py::arg("noise") = 0.2);
    m.def("run_benchmark", [](const std::string& name, int trials, std::uint64_t seed, int hidden) {
        const Dataset ds = load_named(name);
        const int k = static_cast<int>(std::min<Eigen::Index>(ds.dim(), 128));
        return dump(run_benchmark(ds, find_dataset(name)->train_n, default_chip(k, hidden), trials, seed).to_json());
    }, py::arg("name"), py::arg("trials") = 20, py::arg("seed") = 1, py::arg("hidden") = 128);
    m.def("dataset_available", [](const std::string& name) { return dataset_available(name); }, py::arg("name"));

    m.def("energy_per_mac", &energy_per_mac, py::arg("p_total"), py::arg("rate"), py::arg("d"), py::arg("l"));
    m.def("energy_per_mac_system", &energy_per_mac_system, py::arg("p_total"), py::arg("rate"), py::arg("d"),
          py::arg("l"), py::arg("multiplies"), py::arg("e_mult") = 7.1e-12);
    m.def("energy_per_conversion", [](double i_z_max, int b, const ChipConfig& cfg) {
        return energy_per_conversion(i_z_max, b, cfg, EnergyConstants{});
    }, py::arg("i_z_max"), py::arg("b"), py::arg("cfg"));
    m.def("contour_counter_capacity", &contour_counter_capacity, py::arg("d"), py::arg("c"), py::arg("k_neu"),
          py::arg("kappa"), py::arg("u_t") = 0.025);
    m.def("speed_report", [](const ChipConfig& cfg) { return dump(to_json(speed_report(cfg))); }, py::arg("cfg"));
}
