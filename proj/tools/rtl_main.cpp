#include <CLI11.hpp>
#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include "rtl/commands.hpp"

namespace {

struct CliArgs {
    std::string config_path;
    std::string out;
    std::uint64_t seed = 0;
    bool seed_given = false;
    std::vector<std::string> sets;
};

rtl::RunConfig build_config(const CliArgs& a) {
    rtl::ordered_json doc = a.config_path.empty() ? rtl::ordered_json::object() : rtl::read_json_file(a.config_path);
    for (const std::string& kv : a.sets) {
        const std::size_t eq = kv.find('=');
        rtl::require(eq != std::string::npos && eq > 0, rtl::ErrorKind::config,
                     "--set expects key=value, got '" + kv + "'");
        rtl::apply_override(doc, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (a.seed_given) doc["seed"] = a.seed;
    if (!a.out.empty()) doc["out"] = a.out;
    return rtl::parse_run_config(doc);
}

void add_common_flags(CLI::App* sc, CliArgs& a) {
    sc->add_option("--config", a.config_path, "JSON run configuration file");
    sc->add_option("--out", a.out, "output directory (overrides config)");
    sc->add_option("--seed", a.seed, "seed (overrides config)")->each([&a](const std::string&) {
        a.seed_given = true;
    });
    sc->add_option("--set", a.sets, "dotted-path config override, key=value (repeatable)");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"landmark detection under regularized transfer learning"};
    app.require_subcommand(1);
    CliArgs args;

    struct Entry {
        const char* name;
        const char* help;
        void (*fn)(const rtl::RunConfig&);
    };
    const Entry entries[] = {
        {"synth", "generate a synthetic dataset", rtl::cmd_synth},
        {"pretrain", "train a source-task classifier (teacher)", rtl::cmd_pretrain},
        {"train", "train the landmark detector", rtl::cmd_train},
        {"eval", "evaluate landmark predictions", rtl::cmd_eval},
        {"attention", "export teacher/student attention maps", rtl::cmd_attention},
        {"gradcheck", "finite-difference certification of all gradients", rtl::cmd_gradcheck},
        {"sweep", "repeat train/eval over a lambda or sigma grid", rtl::cmd_sweep},
    };
    for (const Entry& e : entries) {
        CLI::App* sc = app.add_subcommand(e.name, e.help);
        add_common_flags(sc, args);
        sc->callback([&args, &e]() { e.fn(build_config(args)); });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: config: " << e.what() << "\n";
        return 2;
    } catch (const rtl::Error& e) {
        std::cerr << "error: " << e.category() << ": " << e.what() << "\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "error: internal: " << e.what() << "\n";
        return 4;
    }
    return 0;
}
