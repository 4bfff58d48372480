// Scenario driver for the CV-QKD link simulator: runs calibrate/simulate/
// recover/estimate/keyrate pipelines, parameter sweeps, the reference
// key-rate regression table, and fronthaul key-budget planning.

#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cvqkd/pipeline.hpp"

namespace fs = std::filesystem;
using namespace cvqkd;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitPipeline = 3;

struct CommonOpts {
    std::string scenario_path;
    std::string out_dir;
    unsigned workers = 1;
    std::int64_t seed_override = -1;
};

scenario::Scenario load_scenario(const CommonOpts& opts) {
    scenario::Scenario sc = scenario::load(opts.scenario_path);
    if (!opts.out_dir.empty()) sc.output_dir = opts.out_dir;
    if (opts.seed_override >= 0)
        sc.seeds = {static_cast<std::uint64_t>(opts.seed_override)};
    return sc;
}

void add_common(CLI::App* cmd, CommonOpts& opts, bool scenario_required = true) {
    auto* s = cmd->add_option("--scenario", opts.scenario_path, "scenario file");
    if (scenario_required) s->required();
    cmd->add_option("--out", opts.out_dir, "output directory");
    cmd->add_option("--workers", opts.workers, "parallel workers");
    cmd->add_option("--seed-override", opts.seed_override, "replace the seed list");
}

std::vector<double> parse_values(const std::string& csv) {
    std::vector<double> out;
    std::stringstream ss(csv);
    std::string tok;
    while (std::getline(ss, tok, ','))
        if (!tok.empty()) out.push_back(std::stod(tok));
    return out;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"pilot-disciplined CV-QKD link simulator"};
    app.require_subcommand(1);

    CommonOpts run_opts, cal_opts, sweep_opts, plan_opts, exp_opts;

    auto* cmd_run = app.add_subcommand("run", "full pipeline over all seeds");
    add_common(cmd_run, run_opts);

    auto* cmd_cal = app.add_subcommand("calibrate", "calibration captures only");
    add_common(cmd_cal, cal_opts);

    auto* cmd_sweep = app.add_subcommand("sweep", "one pipeline run per parameter value");
    add_common(cmd_sweep, sweep_opts);
    std::string sweep_param, sweep_values;
    cmd_sweep->add_option("--param", sweep_param, "b_fil | decision_offset | cmrr | cmrr_q | delta_sop | length | channels")->required();
    cmd_sweep->add_option("--values", sweep_values, "comma-separated values")->required();

    auto* cmd_table = app.add_subcommand("table3", "key-rate regression table");
    std::string table_out = "out";
    cmd_table->add_option("--out", table_out, "output directory");

    auto* cmd_plan = app.add_subcommand("plan", "fronthaul key dimensioning report");
    add_common(cmd_plan, plan_opts, false);

    auto* cmd_exp = app.add_subcommand("export-waveform", "write transmit/channel waveforms");
    add_common(cmd_exp, exp_opts);
    std::string stage = "tx";
    cmd_exp->add_option("--stage", stage, "tx | channel");

    CLI11_PARSE(app, argc, argv);

    try {
        if (cmd_run->parsed()) {
            auto sc = load_scenario(run_opts);
            auto rep = pipeline::run_scenario(sc, run_opts.workers);
            pipeline::write_run_bundle(sc, rep, sc.output_dir);
            for (const auto& r : rep.runs)
                std::cout << "seed " << r.seed << ": zeta = " << r.estimate.zeta
                          << " SNU, zeta_T = " << r.estimate.zeta_T
                          << " SNU, K_S = " << r.keyrate.k_untrusted / 1e6
                          << " Mb/s, K_T = " << r.keyrate.k_trusted / 1e6 << " Mb/s\n";
            std::cout << "report written to " << sc.output_dir << "/report.json\n";
        } else if (cmd_cal->parsed()) {
            auto sc = load_scenario(cal_opts);
            fs::create_directories(sc.output_dir);
            const auto seed = sc.seeds.front();
            auto shot = pipeline::detail::calibration_capture(sc, seed ^ 0x5ca1'ab1e'0000'0001ull, true);
            auto elec = pipeline::detail::calibration_capture(sc, seed ^ 0x5ca1'ab1e'0000'0002ull, false);
            auto shot_syms = dsp::extract_noise_symbols(shot, sc.dsp, sc.tx, sc.rx, 0.0);
            auto elec_syms = dsp::extract_noise_symbols(elec, sc.dsp, sc.tx, sc.rx, 0.0);
            auto cal = est::calibrate_snu(shot_syms, elec_syms);
            pipeline::json j{{"shot_var", cal.shot_var},
                             {"elec_var", cal.elec_var},
                             {"snu_scale", cal.snu_scale()},
                             {"v_el", cal.v_el()},
                             {"n_samples", cal.n_samples}};
            pipeline::write_text(fs::path(sc.output_dir) / "calibration.json", j.dump(2) + "\n");
            std::ofstream os_s(fs::path(sc.output_dir) / "shot.cvq4", std::ios::binary);
            rx::io::write_capture(os_s, shot);
            std::ofstream os_e(fs::path(sc.output_dir) / "elec.cvq4", std::ios::binary);
            rx::io::write_capture(os_e, elec);
            std::cout << "v_el = " << cal.v_el() << " SNU (scale " << cal.snu_scale() << ")\n";
        } else if (cmd_sweep->parsed()) {
            auto sc = load_scenario(sweep_opts);
            auto values = parse_values(sweep_values);
            auto rows = pipeline::sweep(sc, sweep_param, values, sweep_opts.workers);
            fs::create_directories(sc.output_dir);
            const auto path = fs::path(sc.output_dir) / ("sweep_" + sweep_param + ".csv");
            pipeline::write_text(path, pipeline::sweep_csv(sweep_param, rows));
            std::cout << "sweep written to " << path.string() << "\n";
        } else if (cmd_table->parsed()) {
            fs::create_directories(table_out);
            pipeline::write_text(fs::path(table_out) / "table3.csv", pipeline::table3_csv());
            std::cout << pipeline::table3_csv();
        } else if (cmd_plan->parsed()) {
            scenario::Scenario sc;
            if (!plan_opts.scenario_path.empty()) sc = scenario::load(plan_opts.scenario_path);
            if (!plan_opts.out_dir.empty()) sc.output_dir = plan_opts.out_dir;
            auto rep = pipeline::plan_report(sc);
            fs::create_directories(sc.output_dir);
            pipeline::write_text(fs::path(sc.output_dir) / "plan.json", rep.dump(2) + "\n");
            std::cout << pipeline::plan_table(rep);
        } else if (cmd_exp->parsed()) {
            auto sc = load_scenario(exp_opts);
            const auto seed = sc.seeds.front();
            auto symbols = tx::generate_quantum_symbols(sc.tx, sc.n_symbols, seed);
            auto frame = pipeline::detail::transmit(sc, symbols);
            if (stage == "channel") {
                channel::ChannelConfig ch = sc.channel;
                ch.seed = seed;
                frame = channel::propagate(std::move(frame), ch);
            } else if (stage != "tx") {
                throw ConfigError("export-waveform: unknown stage '" + stage + "'");
            }
            fs::create_directories(sc.output_dir);
            io::save_waveform((fs::path(sc.output_dir) / (stage + "_te.cvqw")).string(), frame.te);
            io::save_waveform((fs::path(sc.output_dir) / (stage + "_tm.cvqw")).string(), frame.tm);
            std::ofstream csv(fs::path(sc.output_dir) / (stage + "_te.csv"));
            io::export_csv(csv, frame.te);
            std::cout << "waveforms written to " << sc.output_dir << "\n";
        }
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const PipelineError& e) {
        std::cerr << "pipeline error: " << e.what() << "\n";
        return kExitPipeline;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitPipeline;
    }
    return 0;
}
