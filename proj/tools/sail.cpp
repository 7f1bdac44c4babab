#include <cstdio>
#include <iostream>

#include <CLI11.hpp>

#include "sail/app.hpp"
#include "sail/parallel.hpp"

namespace {

void print_checks(const std::filesystem::path& out) {
    const sail::Json summary = sail::Json::parse(sail::read_text(out / "summary.json"));
    for (const auto& entry : summary.at("entries")) {
        for (const auto& c : entry.at("checks")) {
            std::printf("%s  %s/%s  %s %s %s\n", c.at("pass").get<bool>() ? "PASS" : "FAIL",
                        entry.at("name").get<std::string>().c_str(), c.at("name").get<std::string>().c_str(),
                        c.at("value").dump().c_str(), c.at("relation").get<std::string>().c_str(),
                        c.at("limit").dump().c_str());
        }
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"structural acoustic inverse source toolkit"};
    app.set_version_flag("--version", std::string(sail::tool_version));
    app.require_subcommand(1);

    std::string config_path, out_dir;
    bool force = false, echo = false;
    int threads = 0;
    for (const std::string& name : sail::task_names()) {
        CLI::App* sub = app.add_subcommand(name, "run the " + name + " task");
        sub->add_option("--config", config_path, "JSON config")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", out_dir, "run directory (default: the config's output)");
        sub->add_flag("--force", force, "clear an existing run directory");
        sub->add_option("--threads", threads, "worker threads (default SAIL_THREADS or all cores)")
            ->check(CLI::PositiveNumber);
        sub->add_flag("--echo", echo, "print the validated config with defaults and exit");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    const std::string task = app.get_subcommands().front()->get_name();

    try {
        if (threads > 0) sail::set_thread_count(threads);
        const sail::ExperimentConfig config = sail::load_config(config_path, task);
        if (echo) {
            std::cout << config.echo.dump(2) << "\n";
            return 0;
        }
        const std::filesystem::path out = out_dir.empty() ? std::filesystem::path(config.output) : std::filesystem::path(out_dir);
        const sail::RunManifest m = sail::run(config, out, force, {config_path});
        print_checks(out);
        std::printf("%s  %s  %s\n", m.pass ? "ok" : "FAILED", task.c_str(), out.string().c_str());
        return m.pass ? 0 : sail::exit_code(sail::ErrorKind::assertion);
    } catch (const sail::Error& e) {
        std::fprintf(stderr, "sail %s: %s\n", task.c_str(), e.what());
        return sail::exit_code(e.kind());
    } catch (const std::exception& e) {
        std::fprintf(stderr, "sail %s: internal error: %s\n", task.c_str(), e.what());
        return 1;
    }
}
