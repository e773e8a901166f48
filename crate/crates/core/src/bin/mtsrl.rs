fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MTSRL_LOG", "info")).init();
    std::process::exit(mtsrl::cli::main_with(std::env::args_os()));
}
