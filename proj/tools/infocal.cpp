// infocal: data generation, LM pretraining, training, evaluation, extraction
// and gradient verification for the selector-predictor-guider model.

#include <cstdio>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "infocal/pipeline.hpp"

namespace {

enum ExitCode : int { kOk = 0, kConfig = 2, kData = 3, kNumeric = 4, kVerification = 5 };

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c == '\n' ? ' ' : c;
  }
  return out;
}

int fail(int code, const char* kind, const std::string& message) {
  std::cerr << "error code=" << code << " kind=" << kind << " message=\"" << escape(message) << "\"\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Rationale extraction with information calibration"};
  app.require_subcommand(1);

  infocal::ConfigSources sources;
  std::uint64_t seed = 0;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", sources.file, "JSON config file");
    sub->add_option("--set", sources.overrides, "Override a config value, key=value (repeatable)");
    sub->add_option("--preset", sources.preset, "Hyperparameter preset")
        ->check(CLI::IsMember({"beer-regression", "legal-classification"}));
    sub->add_option("--seed", seed, "Override the run seed");
  };

  const char* names[] = {"gen-data", "pretrain-lm", "train", "eval", "extract", "gradcheck"};
  const char* help[] = {"Generate synthetic splits and vocabulary", "Pretrain and freeze the language model",
                        "Train the model and write checkpoint + metrics", "Score a split and write report.json",
                        "Write hard-mask rationales as JSONL", "Finite-difference check of the full objective"};
  CLI::App* subs[6];
  for (int i = 0; i < 6; ++i) add_common(subs[i] = app.add_subcommand(names[i], help[i]));
  infocal::GradCheckSetup setup;
  subs[5]->add_option("--tolerance", setup.tolerance, "Maximum relative error");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(kConfig, "config", e.what());
  }

  const std::string command = app.get_subcommands().front()->get_name();
  if (app.get_subcommands().front()->count("--seed")) sources.seed = seed;

  try {
    if (command == "gradcheck") {
      if (sources.seed) setup.seed = *sources.seed;
      const auto r = infocal::full_model_gradcheck(setup);
      std::cout << "gradcheck generator max_rel_error=" << r.generator.max_rel_error << " worst="
                << r.generator.worst_param << " checked=" << r.generator.checked << "\n"
                << "gradcheck discriminator max_rel_error=" << r.discriminator.max_rel_error
                << " worst=" << r.discriminator.worst_param << " checked=" << r.discriminator.checked << "\n"
                << "gradcheck seconds=" << r.seconds << " " << (r.passed() ? "PASS" : "FAIL") << "\n";
      return r.passed() ? kOk : fail(kVerification, "verification", "gradient check exceeded tolerance");
    }

    const auto cfg = infocal::resolve_config(sources);
    if (command == "gen-data") {
      const auto corpus = infocal::cmd_gen_data(cfg);
      std::cout << "wrote " << corpus.train.size() << "/" << corpus.dev.size() << "/" << corpus.test.size()
                << " instances, vocab " << corpus.vocab.size() << " to " << cfg.data_path().string() << "\n";
    } else if (command == "pretrain-lm") {
      const auto r = infocal::cmd_pretrain_lm(cfg);
      std::cout << "lm pretrain steps=" << r.steps << " loss " << r.first_loss << " -> " << r.last_loss << "\n";
    } else if (command == "train") {
      const auto r = infocal::cmd_train(cfg);
      std::cout << "trained epochs=" << r.epochs_completed;
      if (!r.rows.empty()) std::cout << " J_total=" << r.rows.back().losses.J_total << " sel_pct=" << r.rows.back().sel_pct;
      std::cout << "\n";
    } else if (command == "eval") {
      std::cout << infocal::cmd_eval(cfg).dump(2) << "\n";
    } else if (command == "extract") {
      const auto records = infocal::cmd_extract(cfg);
      std::cout << "extracted " << records.size() << " rationales to "
                << infocal::run_paths(cfg).extraction.string() << "\n";
    }
    return kOk;
  } catch (const infocal::ConfigError& e) {
    return fail(kConfig, "config", e.what());
  } catch (const infocal::ParseError& e) {
    return fail(kData, "parse", e.what());
  } catch (const infocal::DataError& e) {
    return fail(kData, "data", e.what());
  } catch (const infocal::NumericFault& e) {
    return fail(kNumeric, "numeric", e.what());
  } catch (const infocal::ContractViolation& e) {
    return fail(kConfig, "contract", e.what());
  } catch (const std::exception& e) {
    return fail(kData, "io", e.what());
  }
}
