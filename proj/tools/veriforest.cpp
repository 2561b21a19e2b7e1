// Command-line front end for the drone-imagery verification pipeline.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "veriforest/attacks.hpp"
#include "veriforest/config.hpp"
#include "veriforest/dataset.hpp"
#include "veriforest/evalharness.hpp"
#include "veriforest/hash.hpp"
#include "veriforest/metriclearn.hpp"
#include "veriforest/png_io.hpp"
#include "veriforest/scenesim.hpp"
#include "veriforest/verifier.hpp"

namespace fs = std::filesystem;
using namespace veriforest;

namespace {

void write_text(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << content;
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int cmd_gen_data(const std::string& configPath, const std::string& outDir) {
    ExperimentConfig cfg = load_experiment_config(configPath);
    World world = generate_world(cfg.world);
    Dataset ds = build_dataset(world, cfg.captureSeed);
    save_dataset(ds, outDir);
    std::cerr << "wrote " << ds.submissions.size() << " truthful submissions and "
              << ds.satellites.size() << " satellite tiles to " << outDir << "\n";
    return 0;
}

int cmd_attack(const std::string& dataDir, const std::string& typesCsv,
               const std::string& outDir, PgdParams pgd, uint64_t attackSeed,
               const RegressorTrainConfig& regCfg) {
    Dataset ds = load_dataset(dataDir);
    World world = generate_world(ds.world); // deterministic reconstruction

    AttackTypes types{false, false, false, false};
    std::stringstream ss(typesCsv);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (tok == "loc") types.location = true;
        else if (tok == "time") types.time = true;
        else if (tok == "adv") types.adversarial = true;
        else if (tok == "combined") types.combined = true;
        else throw std::runtime_error("unknown attack type '" + tok + "'");
    }

    CoverRegressor reg(ds.world.parcelPixels);
    if (types.adversarial || types.combined) reg = train_cover_regressor(ds, regCfg);
    Dataset attacked = generate_attacks(world, ds, reg, pgd, types, attackSeed);
    save_dataset(attacked, outDir);
    std::cerr << "wrote " << attacked.submissions.size() << " submissions to " << outDir << "\n";
    return 0;
}

int cmd_train(const std::string& dataDir, const std::string& configPath,
              const std::string& outDir) {
    ExperimentConfig cfg = load_experiment_config(configPath);
    Dataset ds = load_dataset(dataDir);
    ParcelSplit split = split_parcels(ds.world.gridSize, cfg.split);
    // the CLI trains on train parcels with val parcels for early stopping;
    // test parcels are left untouched for evaluation
    Dataset trainDs = filter_dataset(ds, split.train);
    Dataset valDs = filter_dataset(ds, split.val);
    EmbeddingModel model =
        train_metric(build_cell_bank(trainDs, cfg.train.includeAdversarial),
                     build_cell_bank(valDs, cfg.train.includeAdversarial), cfg.train);

    fs::create_directories(outDir);
    save_weights(fs::path(outDir) / "model.vfw", model.net(), model.params(), cfg.train.seed);
    save_history_csv(fs::path(outDir) / "history.csv", model.history);
    ordered_json run{{"config", experiment_config_json(cfg)},
                     {"datasetManifestHash", git_blob_hash(read_text(fs::path(dataDir) / "manifest.json"))}};
    write_text(fs::path(outDir) / "run.json", run.dump(2) + "\n");
    std::cerr << "trained " << model.history.size() << " epochs; model written to " << outDir
              << "\n";
    return 0;
}

int cmd_calibrate(const std::string& modelDir, const std::string& dataDir,
                  const std::string& outFile) {
    EmbeddingModel model = load_embedding_model(fs::path(modelDir) / "model.vfw");
    Dataset ds = load_dataset(dataDir);
    std::vector<std::pair<double, bool>> samples;
    for (const auto& s : ds.submissions)
        samples.emplace_back(
            verification_distance(model, s.image,
                                  ds.satellite(s.claimedI, s.claimedJ, s.claimedT)),
            s.label == "truthful");
    Calibration cal = calibrate(samples);
    cal.datasetHash = git_blob_hash(read_text(fs::path(dataDir) / "manifest.json"));
    write_text(outFile, calibration_json(cal).dump(2) + "\n");
    std::cerr << "tau=" << cal.tau << " balancedAccuracy=" << cal.balancedAccuracy << "\n";
    return 0;
}

int cmd_verify(const std::string& modelDir, const std::string& calibrationFile,
               const std::string& submissionPng, const std::string& parcelArg, int time,
               const std::string& dataDir) {
    EmbeddingModel model = load_embedding_model(fs::path(modelDir) / "model.vfw");
    Calibration cal = calibration_from_json(nlohmann::json::parse(read_text(calibrationFile)));

    auto comma = parcelArg.find(',');
    if (comma == std::string::npos) throw std::runtime_error("--parcel expects i,j");
    Submission sub;
    sub.claimedI = std::stoi(parcelArg.substr(0, comma));
    sub.claimedJ = std::stoi(parcelArg.substr(comma + 1));
    sub.claimedT = time;
    sub.id = fs::path(submissionPng).filename().string();
    sub.image = read_png(submissionPng);

    Dataset ds = load_dataset(dataDir);
    Verdict v = verify(model, cal, sub, ds);
    std::cout << verdict_json(v).dump() << "\n";
    return v.decision == "TRUTHFUL" ? 0 : 1;
}

int cmd_evaluate(const std::string& configPath, const std::string& outFile) {
    ExperimentConfig cfg = load_experiment_config(configPath);
    auto t0 = std::chrono::steady_clock::now();
    ExperimentReport rep = run_experiment(cfg, experiment_config_json(cfg));
    auto secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    fs::path out(outFile);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    write_text(out, report_json(rep).dump(2) + "\n");
    fs::path csv = out;
    csv.replace_extension(".histograms.csv");
    write_text(csv, histograms_csv(rep));
    fs::path weights = out.parent_path() / "learned_model.vfw";
    {
        nn::Network enc = nn::make_encoder();
        save_weights(weights, enc, rep.learnedParams, rep.learnedSeed);
    }
    // wall-clock stays out of the report so identical configs give identical bytes
    std::cerr << "evaluate finished in " << secs << " s; report at " << out << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"veriforest: drone imagery truthfulness verification pipeline"};
    app.require_subcommand(1);

    std::string configPath, dataDir, outPath, typesCsv = "loc,time,adv,combined";
    std::string modelDir, calibrationFile, submissionPng, parcelArg;
    int time = 0;
    PgdParams pgd;
    uint64_t attackSeed = 2002;
    RegressorTrainConfig regCfg;

    auto* gen = app.add_subcommand("gen-data", "generate a seeded synthetic dataset");
    gen->add_option("--config", configPath, "experiment config JSON")->required();
    gen->add_option("--out", outPath, "output dataset directory")->required();

    auto* atk = app.add_subcommand("attack", "expand a dataset with attack submissions");
    atk->add_option("--data", dataDir, "input dataset directory")->required();
    atk->add_option("--types", typesCsv, "comma list of loc,time,adv,combined");
    atk->add_option("--out", outPath, "output dataset directory")->required();
    atk->add_option("--epsilon", pgd.epsilon, "PGD l-inf budget");
    atk->add_option("--step-size", pgd.stepSize, "PGD step size");
    atk->add_option("--steps", pgd.steps, "PGD iterations");
    atk->add_option("--seed", attackSeed, "attack seed");

    auto* trn = app.add_subcommand("train", "train the verification metric");
    trn->add_option("--data", dataDir, "attacked dataset directory")->required();
    trn->add_option("--config", configPath, "experiment config JSON")->required();
    trn->add_option("--out", outPath, "output model directory")->required();

    auto* cal = app.add_subcommand("calibrate", "calibrate the decision threshold");
    cal->add_option("--model", modelDir, "model directory")->required();
    cal->add_option("--data", dataDir, "labeled dataset directory")->required();
    cal->add_option("--out", outPath, "output calibration JSON")->required();

    auto* ver = app.add_subcommand("verify", "verify a single submission");
    ver->add_option("--model", modelDir, "model directory")->required();
    ver->add_option("--calibration", calibrationFile, "calibration JSON")->required();
    ver->add_option("--submission", submissionPng, "submission PNG")->required();
    ver->add_option("--parcel", parcelArg, "claimed parcel i,j")->required();
    ver->add_option("--time", time, "claimed timestep")->required();
    ver->add_option("--data", dataDir, "dataset directory (satellite store)")->required();

    auto* evl = app.add_subcommand("evaluate", "run the full experiment");
    evl->add_option("--config", configPath, "experiment config JSON")->required();
    evl->add_option("--out", outPath, "output report JSON")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen_data(configPath, outPath);
        if (atk->parsed()) return cmd_attack(dataDir, typesCsv, outPath, pgd, attackSeed, regCfg);
        if (trn->parsed()) return cmd_train(dataDir, configPath, outPath);
        if (cal->parsed()) return cmd_calibrate(modelDir, dataDir, outPath);
        if (ver->parsed())
            return cmd_verify(modelDir, calibrationFile, submissionPng, parcelArg, time, dataDir);
        if (evl->parsed()) return cmd_evaluate(configPath, outPath);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
