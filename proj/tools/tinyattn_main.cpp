#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tinyattn/errors.hpp"
#include "tinyattn/run.hpp"

namespace {

struct SubArgs {
  CLI::App* sub = nullptr;
  std::string config_path;
  std::vector<std::string> sets;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tiny-attention adapter workbench"};
  app.require_subcommand(1);

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"pretrain", "train the toy backbone from scratch and save a checkpoint"},
      {"adapt", "freeze a checkpointed backbone, attach tiny-attention adapters, train them"},
      {"finetune", "full fine-tuning baseline from a checkpoint"},
      {"merge", "average a multi-head adapter checkpoint into a single scaled head"},
      {"eval", "report validation accuracy of a checkpoint on a task"},
      {"count-params", "print itemized trainable-parameter counts for a config"},
      {"export-task", "dump a task corpus as 'ids<TAB>label' lines"},
  };

  std::vector<SubArgs> subs(commands.size());
  for (size_t i = 0; i < commands.size(); ++i) {
    subs[i].sub = app.add_subcommand(commands[i].first, commands[i].second);
    subs[i].sub->add_option("--config", subs[i].config_path, "JSON config file");
    subs[i].sub->add_option("--set", subs[i].sets,
                            "override a config value, e.g. --set trainer.lr=0.002");
  }

  CLI11_PARSE(app, argc, argv);

  try {
    for (size_t i = 0; i < commands.size(); ++i) {
      if (!subs[i].sub->parsed()) continue;
      tinyattn::RunConfig cfg =
          subs[i].config_path.empty()
              ? tinyattn::default_run_config(subs[i].sets)
              : tinyattn::load_run_config(subs[i].config_path, subs[i].sets);
      cfg.command = tinyattn::command_from_string(commands[i].first);
      return tinyattn::run(cfg, std::cout);
    }
    std::cerr << "tinyattn: no command given\n";
    return 1;
  } catch (const tinyattn::NumericError& e) {
    std::cerr << "tinyattn: numeric failure: " << e.what() << "\n";
    return 2;
  } catch (const tinyattn::IoError& e) {
    std::cerr << "tinyattn: I/O error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "tinyattn: " << e.what() << "\n";
    return 1;
  }
}
