#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "mwalign/pipeline.hpp"

namespace {

enum ExitCode : int { kOk = 0, kOther = 1, kConfig = 2, kDiverged = 3, kIo = 4 };

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-way cross-lingual embedding alignment"};
    app.require_subcommand(1);

    std::string config_path;
    std::string checkpoint_path;
    std::string out_dir;
    std::optional<std::uint64_t> seed;

    for (const char* name : {"gen", "train", "eval", "ablate", "hist"}) {
        auto* sub = app.add_subcommand(name);
        sub->add_option("--config", config_path, "run config JSON")->required();
        sub->add_option("--out", out_dir, "output directory (overrides output_dir)");
        sub->add_option("--seed", seed, "global seed override");
        if (std::string(name) == "eval" || std::string(name) == "hist")
            sub->add_option("--checkpoint", checkpoint_path, "trained encoder checkpoint");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfig;
    }

    const std::string command = app.get_subcommands().front()->get_name();
    try {
        const mwalign::RunConfig cfg = mwalign::load_run_config(config_path, seed);
        const std::filesystem::path out = out_dir.empty() ? cfg.output_dir : std::filesystem::path(out_dir);
        std::optional<std::filesystem::path> checkpoint;
        if (!checkpoint_path.empty()) checkpoint = checkpoint_path;

        if (command == "gen") {
            mwalign::cmd_gen(cfg, out);
        } else if (command == "train") {
            const auto result = mwalign::cmd_train(cfg, out);
            std::cout << "best epoch " << result.state.best_epoch << ", valid loss " << result.state.best_valid_loss
                      << '\n';
        } else if (command == "eval") {
            const auto rows = mwalign::cmd_eval(cfg, checkpoint, out);
            std::cout << rows.size() << " result rows\n";
        } else if (command == "ablate") {
            const auto outcome = mwalign::cmd_ablate(cfg, out);
            for (const auto& row : outcome.summary)
                std::cout << row.candidate << " vs " << row.baseline << " [" << row.metric << "]: diff " << row.difference
                          << " (" << row.status << ")\n";
        } else {
            const auto hist = mwalign::cmd_hist(cfg, checkpoint, out);
            for (const auto& h : hist)
                std::cout << h.pair.first << '-' << h.pair.second << ": separation " << h.before.separation << " -> "
                          << h.after.separation << '\n';
        }
        std::cout << "outputs in " << out.string() << '\n';
        return kOk;
    } catch (const mwalign::TrainingDiverged& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kDiverged;
    } catch (const mwalign::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfig;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfig;
    } catch (const std::ios_base::failure& e) {
        std::cerr << "io error: " << e.what() << '\n';
        return kIo;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "io error: " << e.what() << '\n';
        return kIo;
    } catch (const mwalign::CorpusError& e) {
        std::cerr << "corpus error: " << e.what() << '\n';
        return kIo;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kOther;
    }
}
