// fedloc-synth: writes a small synthetic survey in the public CSV layout
// (trainingData.csv + validationData.csv) for smoke runs without the
// real dataset.

#include "fedloc/io.hpp"
#include "fedloc/synthetic.hpp"

#include "CLI11.hpp"

#include <filesystem>
#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"Synthetic three-building Wi-Fi survey", "fedloc-synth"};
    std::string out;
    fedloc::SyntheticConfig cfg;
    std::size_t validation_per_floor = 10;
    app.add_option("--out", out, "output directory")->required();
    app.add_option("--records-per-floor", cfg.records_per_floor, "training records per floor");
    app.add_option("--validation-per-floor", validation_per_floor, "validation records per floor (0: none)");
    app.add_option("--environment-seed", cfg.environment_seed, "layout and AP placement seed");
    app.add_option("--sample-seed", cfg.sample_seed, "measurement noise seed");
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }
    try {
        std::filesystem::create_directories(out);
        fedloc::io::write_file(std::filesystem::path(out) / "trainingData.csv", fedloc::synthetic_uji_csv(cfg));
        if (validation_per_floor > 0) {
            auto v = cfg;
            v.records_per_floor = validation_per_floor;
            v.sample_seed = cfg.sample_seed + 1000;
            fedloc::io::write_file(std::filesystem::path(out) / "validationData.csv", fedloc::synthetic_uji_csv(v));
        }
    } catch (const std::exception& e) {
        std::cerr << "fedloc-synth: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
