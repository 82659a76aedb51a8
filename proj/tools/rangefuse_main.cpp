#include <iostream>

#include "commands.h"
#include "rangefuse/errors.h"

int main(int argc, char** argv) {
  CLI::App app{"rangefuse: range-view LiDAR-camera fusion toolkit"};
  app.require_subcommand(1);
  rangefuse::cli::register_commands(app);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const rangefuse::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "fatal: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
