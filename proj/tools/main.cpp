// Command-line front end: gen / train / refine / eval / compare.
// Exit codes: 0 success, 1 runtime or domain error, 2 usage error.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "maskrefine/maskrefine.hpp"

namespace fs = std::filesystem;
using namespace maskrefine;

namespace {

bool valid_size(const std::string& s) {
    const std::size_t xpos = s.find('x');
    if (xpos == std::string::npos || xpos == 0 || xpos + 1 >= s.size())
        return false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i == xpos)
            continue;
        if (s[i] < '0' || s[i] > '9')
            return false;
    }
    return true;
}

// "HxW" with strict lowercase x; validated by the option check already.
std::pair<int, int> parse_size(const std::string& s) {
    const std::size_t xpos = s.find('x');
    return {std::stoi(s.substr(0, xpos)), std::stoi(s.substr(xpos + 1))};
}

struct GenOpts {
    std::uint64_t seed = 0;
    int count = 0;
    std::string size;
    std::string out;
    NoiseConfig noise;
};

int run_gen(const GenOpts& o) {
    const auto [h, w] = parse_size(o.size);
    const std::vector<Sample> ds = make_dataset(o.seed, o.count, h, w, o.noise);
    save_dataset_dir(o.out, ds);
    return 0;
}

struct TrainOpts {
    std::string data;
    std::string out;
    TrainConfig tc;
    RefinerConfig nc;
};

int run_train(const TrainOpts& o) {
    const std::vector<Sample> ds = load_dataset_dir(o.data);
    const TrainResult res = train(o.tc, o.nc, ds, [](int epoch, double loss) {
        std::printf("epoch %d loss %.6f\n", epoch, loss);
        std::fflush(stdout);
    });
    save_checkpoint_file(o.out, o.nc, res.params);
    return 0;
}

struct RefineOpts {
    std::string model, mask, source, out;
    double tau = 0.5;
    bool tau_set = false;
};

int run_refine(const RefineOpts& o) {
    const auto [cfg, params] = load_checkpoint_file(o.model);
    const Mask mask = mask_from_pgm(load_pgm(o.mask));
    const GrayImage source = gray_from_pgm(load_pgm(o.source));
    const float tau = o.tau_set ? static_cast<float>(o.tau) : cfg.threshold;
    const Mask refined = refine_mask(cfg, params, mask, source, tau);
    save_pgm(o.out, pgm_from_mask(refined));
    return 0;
}

struct EvalOpts {
    std::string pred, gt;
    bool csv = false;
};

void print_metrics_row(const std::string& name, const MetricsRecord& m, char sep) {
    std::fputs(detail::condition_row(name, m, sep).c_str(), stdout);
    std::fputc('\n', stdout);
}

int run_eval(const EvalOpts& o) {
    const char sep = o.csv ? ',' : ' ';
    std::vector<std::pair<std::string, std::pair<fs::path, fs::path>>> pairs;
    if (fs::is_directory(o.pred) && fs::is_directory(o.gt)) {
        std::vector<fs::path> preds;
        for (const auto& e : fs::directory_iterator(o.pred))
            if (e.path().extension() == ".pgm")
                preds.push_back(e.path());
        std::sort(preds.begin(), preds.end());
        for (const fs::path& p : preds) {
            const fs::path g = fs::path(o.gt) / p.filename();
            if (!fs::exists(g))
                throw IngestError("eval: no ground truth for " + p.filename().string());
            pairs.emplace_back(p.stem().string(), std::make_pair(p, g));
        }
        if (pairs.empty())
            throw IngestError("eval: no .pgm files in " + o.pred);
    } else if (fs::is_directory(o.pred) || fs::is_directory(o.gt)) {
        throw IngestError("eval: pred and gt must both be files or both be directories");
    } else {
        pairs.emplace_back(fs::path(o.pred).stem().string(),
                           std::make_pair(fs::path(o.pred), fs::path(o.gt)));
    }

    std::string head = "sample";
    for (const char* col : {"precision", "recall", "f_measure", "pwc", "iou"}) {
        head += sep;
        head += col;
    }
    std::printf("%s\n", head.c_str());
    std::vector<MetricsRecord> records;
    for (const auto& [name, files] : pairs) {
        const MetricsRecord m =
            evaluate(mask_from_pgm(load_pgm(files.first)), mask_from_pgm(load_pgm(files.second)));
        records.push_back(m);
        print_metrics_row(name, m, sep);
    }
    print_metrics_row("mean", mean_metrics(records), sep);
    return 0;
}

struct CompareOpts {
    std::string data, model;
    BayesConfig bayes;
    bool csv = false;
};

int run_compare(const CompareOpts& o) {
    const std::vector<Sample> ds = load_dataset_dir(o.data);
    const auto [cfg, params] = load_checkpoint_file(o.model);
    const CompareReport rep = compare(ds, cfg, params, o.bayes, cfg.threshold);
    std::fputs(format_report(rep, o.csv).c_str(), stdout);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"mask refinement toolkit: synthetic data, Bayesian baseline, learned refiner"};
    app.require_subcommand(1);

    GenOpts gen;
    CLI::App* cgen = app.add_subcommand("gen", "generate a synthetic dataset directory");
    cgen->add_option("--seed", gen.seed, "master PRNG seed")->default_val(0);
    cgen->add_option("--count", gen.count, "number of samples")->required()->check(CLI::PositiveNumber);
    cgen->add_option("--size", gen.size, "sample dims as HxW, e.g. 64x64")
        ->required()
        ->check(CLI::Validator(
            [](std::string& s) { return valid_size(s) ? std::string{} : "size must be HxW"; },
            "SIZE"));
    cgen->add_option("--out", gen.out, "output dataset directory")->required();
    cgen->add_option("--flip-fg", gen.noise.p_flip_fg, "fg->bg flip probability")
        ->check(CLI::Range(0.0, 1.0));
    cgen->add_option("--flip-bg", gen.noise.p_flip_bg, "bg->fg flip probability")
        ->check(CLI::Range(0.0, 1.0));
    cgen->add_option("--jitter", gen.noise.jitter_radius, "boundary jitter radius")
        ->check(CLI::NonNegativeNumber);
    cgen->add_option("--blobs", gen.noise.blob_count, "spurious foreground blob count")
        ->check(CLI::NonNegativeNumber);

    TrainOpts tr;
    CLI::App* ctrain = app.add_subcommand("train", "train the refiner on a dataset directory");
    ctrain->add_option("--data", tr.data, "dataset directory")->required();
    ctrain->add_option("--out", tr.out, "output checkpoint path")->required();
    ctrain->add_option("--epochs", tr.tc.epochs, "training epochs")->check(CLI::PositiveNumber);
    ctrain->add_option("--batch", tr.tc.batch_size, "batch size")->check(CLI::PositiveNumber);
    ctrain->add_option("--lr", tr.tc.lr, "Adam learning rate");
    ctrain->add_option("--levels", tr.nc.levels, "U-Net downsampling levels")
        ->check(CLI::PositiveNumber);
    ctrain->add_option("--channels", tr.nc.base_channels, "channels at full resolution")
        ->check(CLI::PositiveNumber);
    ctrain->add_option("--seed", tr.tc.seed, "training PRNG seed");

    RefineOpts rf;
    CLI::App* crefine = app.add_subcommand("refine", "refine one mask with a trained model");
    crefine->add_option("--model", rf.model, "checkpoint path")->required();
    crefine->add_option("--mask", rf.mask, "input mask PGM")->required();
    crefine->add_option("--source", rf.source, "source frame PGM")->required();
    crefine->add_option("--out", rf.out, "output mask PGM")->required();
    CLI::Option* tau_opt =
        crefine->add_option("--tau", rf.tau, "decision threshold (default: from checkpoint)")
            ->check(CLI::Range(0.0, 1.0));

    EvalOpts ev;
    CLI::App* ceval = app.add_subcommand("eval", "score predictions against ground truth");
    ceval->add_option("--pred", ev.pred, "prediction PGM file or directory")->required();
    ceval->add_option("--gt", ev.gt, "ground-truth PGM file or directory")->required();
    ceval->add_flag("--csv", ev.csv, "comma-separated output");

    CompareOpts cp;
    CLI::App* ccompare =
        app.add_subcommand("compare", "raw vs Bayesian vs network three-way report");
    ccompare->add_option("--data", cp.data, "dataset directory")->required();
    ccompare->add_option("--model", cp.model, "checkpoint path")->required();
    ccompare->add_option("--bayes-window", cp.bayes.window, "Bayesian window size");
    ccompare->add_option("--bayes-sigma", cp.bayes.sigma, "Bayesian Gaussian sigma");
    ccompare->add_option("--bayes-iters", cp.bayes.max_iters, "Bayesian max iterations");
    ccompare->add_flag("--csv", cp.csv, "comma-separated output");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (cgen->parsed())
            return run_gen(gen);
        if (ctrain->parsed())
            return run_train(tr);
        if (crefine->parsed()) {
            rf.tau_set = tau_opt->count() > 0;
            return run_refine(rf);
        }
        if (ceval->parsed())
            return run_eval(ev);
        if (ccompare->parsed())
            return run_compare(cp);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 2;  // unreachable given require_subcommand(1)
}
