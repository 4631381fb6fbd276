//! CLI configuration: flags, then `MCD_*` environment variables, then
//! `mcd.json`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::crypto::{GroupSuite, KdfParams, KdfProfile, LARGE_TEST_PRIME};
use crate::error::{Error, Result};
use crate::sim::SuiteChoice;
use crate::variants::simple::SIMPLE_KDF_DOMAIN;

pub const ENV_PREFIX: &str = "MCD_";
pub const CONFIG_FILE_NAME: &str = "mcd.json";
pub const DEFAULT_DATA_DIR: &str = "mcd-data";

/// KDF cost used by the simple variant in the demo profile (about 100 ms per
/// token on a current laptop core).
pub const DEMO_KDF_COST: u32 = 12;
pub const PRODUCTION_KDF_COST: u32 = 15;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum KdfProfileArg {
    #[default]
    Test,
    Demo,
    Production,
}

impl KdfProfileArg {
    pub fn params(self) -> Result<KdfParams> {
        match self {
            KdfProfileArg::Test => Ok(KdfParams::test(SIMPLE_KDF_DOMAIN)),
            KdfProfileArg::Demo => KdfParams::new(KdfProfile::Demo, DEMO_KDF_COST, SIMPLE_KDF_DOMAIN),
            KdfProfileArg::Production => KdfParams::new(KdfProfile::Production, PRODUCTION_KDF_COST, SIMPLE_KDF_DOMAIN),
        }
    }
}

/// Global flags shared by every subcommand.
#[derive(clap::Args, Clone, Debug, Default, PartialEq, Eq)]
pub struct ConfigArgs {
    /// Configuration file (default: ./mcd.json when present).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Directory holding params, authority state and certificates.
    #[arg(long, global = true, value_name = "DIR")]
    pub data_dir: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub suite: Option<SuiteChoice>,
    /// Matching server address.
    #[arg(long, global = true, value_name = "ADDR")]
    pub server: Option<String>,
    #[arg(long, global = true, value_name = "ADDR")]
    pub key_server: Option<String>,
    #[arg(long, global = true, value_name = "ADDR")]
    pub directory: Option<String>,
    /// KDF cost profile for the simple variant.
    #[arg(long, global = true, value_enum)]
    pub kdf_profile: Option<KdfProfileArg>,
    /// Hex seed for `setup`, decimal seed for `simulate`.
    #[arg(long, global = true)]
    pub seed: Option<String>,
}

/// `mcd.json` contents; keys match the long flag names with underscores.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub data_dir: Option<PathBuf>,
    pub suite: Option<SuiteChoice>,
    pub server: Option<String>,
    pub key_server: Option<String>,
    pub directory: Option<String>,
    pub kdf_profile: Option<KdfProfileArg>,
    pub seed: Option<String>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::InvalidParams(format!("{}: {e}", path.display())))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CliConfig {
    pub data_dir: PathBuf,
    pub suite: SuiteChoice,
    pub server: Option<String>,
    pub key_server: Option<String>,
    pub directory: Option<String>,
    pub kdf_profile: KdfProfileArg,
    pub seed: Option<String>,
}

fn from_env<T: clap::ValueEnum>(key: &str, raw: Option<String>) -> Result<Option<T>> {
    raw.map(|v| T::from_str(&v, false).map_err(|_| Error::InvalidParams(format!("{ENV_PREFIX}{key}: bad value {v:?}"))))
        .transpose()
}

impl CliConfig {
    /// Resolves against the process environment and the working directory.
    pub fn resolve(args: &ConfigArgs) -> Result<Self> {
        CliConfig::resolve_with(args, |k| std::env::var(k).ok(), Path::new("."))
    }

    /// `env` looks up full variable names such as `MCD_DATA_DIR`; `cwd` is
    /// searched for `mcd.json` when no config path is given.
    pub fn resolve_with(args: &ConfigArgs, env: impl Fn(&str) -> Option<String>, cwd: &Path) -> Result<Self> {
        let var = |k: &str| env(&format!("{ENV_PREFIX}{k}")).filter(|v| !v.is_empty());
        let file = match args.config.clone().or_else(|| var("CONFIG").map(PathBuf::from)) {
            Some(path) => ConfigFile::load(&path)?,
            None => {
                let default = cwd.join(CONFIG_FILE_NAME);
                if default.exists() {
                    ConfigFile::load(&default)?
                } else {
                    ConfigFile::default()
                }
            }
        };
        Ok(CliConfig {
            data_dir: args
                .data_dir
                .clone()
                .or_else(|| var("DATA_DIR").map(PathBuf::from))
                .or(file.data_dir)
                .unwrap_or_else(|| PathBuf::from(DEFAULT_DATA_DIR)),
            suite: args.suite.or(from_env("SUITE", var("SUITE"))?).or(file.suite).unwrap_or_default(),
            server: args.server.clone().or_else(|| var("SERVER")).or(file.server),
            key_server: args.key_server.clone().or_else(|| var("KEY_SERVER")).or(file.key_server),
            directory: args.directory.clone().or_else(|| var("DIRECTORY")).or(file.directory),
            kdf_profile: args
                .kdf_profile
                .or(from_env("KDF_PROFILE", var("KDF_PROFILE"))?)
                .or(file.kdf_profile)
                .unwrap_or_default(),
            seed: args.seed.clone().or_else(|| var("SEED")).or(file.seed),
        })
    }

    pub fn group_suite(&self) -> GroupSuite {
        match self.suite {
            SuiteChoice::Production => GroupSuite::Production,
            SuiteChoice::Transparent => GroupSuite::transparent(LARGE_TEST_PRIME).expect("prime order"),
        }
    }

    pub fn require(value: &Option<String>, flag: &str) -> Result<String> {
        value.clone().ok_or_else(|| Error::InvalidParams(format!("--{flag} is required")))
    }

    /// The seed as 32 bytes of hex, for `setup`.
    pub fn setup_seed(&self) -> Result<Option<[u8; 32]>> {
        self.seed
            .as_deref()
            .map(|s| {
                hex::decode(s)
                    .ok()
                    .and_then(|b| <[u8; 32]>::try_from(b).ok())
                    .ok_or_else(|| Error::InvalidParams("setup seed must be 64 hex characters".into()))
            })
            .transpose()
    }

    /// The seed as a decimal integer, for `simulate`.
    pub fn simulate_seed(&self) -> Result<Option<u64>> {
        self.seed
            .as_deref()
            .map(|s| s.parse().map_err(|_| Error::InvalidParams("simulate seed must be a decimal integer".into())))
            .transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::Parser;
    use std::collections::HashMap;

    #[derive(Parser)]
    struct Cli {
        #[command(flatten)]
        config: ConfigArgs,
    }

    const KEYS: &[(&str, &str)] = &[
        ("data_dir", "/tmp/mcd-x"),
        ("suite", "transparent"),
        ("server", "127.0.0.1:7001"),
        ("key_server", "127.0.0.1:7002"),
        ("directory", "127.0.0.1:7003"),
        ("kdf_profile", "demo"),
        ("seed", "42"),
    ];

    fn resolve(flags: &[String], env: HashMap<String, String>, cwd: &Path) -> CliConfig {
        let mut argv = vec!["mcd".to_owned()];
        argv.extend_from_slice(flags);
        let cli = Cli::try_parse_from(argv).unwrap();
        CliConfig::resolve_with(&cli.config, |k| env.get(k).cloned(), cwd).unwrap()
    }

    #[test]
    fn every_key_round_trips_through_all_three_forms() {
        let dir = tempfile::tempdir().unwrap();
        let empty = tempfile::tempdir().unwrap();
        for (key, value) in KEYS {
            let via_flag =
                resolve(&[format!("--{}", key.replace('_', "-")), value.to_string()], HashMap::new(), empty.path());
            let env = HashMap::from([(format!("MCD_{}", key.to_uppercase()), value.to_string())]);
            let via_env = resolve(&[], env, empty.path());
            std::fs::write(dir.path().join(CONFIG_FILE_NAME), format!("{{\"{key}\": \"{value}\"}}")).unwrap();
            let via_file = resolve(&[], HashMap::new(), dir.path());
            assert_eq!(via_flag, via_env, "{key}");
            assert_eq!(via_flag, via_file, "{key}");
            assert_ne!(via_flag, resolve(&[], HashMap::new(), empty.path()), "{key} had no effect");
        }
    }

    #[test]
    fn flags_beat_env_beat_file() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join(CONFIG_FILE_NAME),
            r#"{"server":"file","directory":"file","key_server":"file"}"#,
        )
        .unwrap();
        let env = HashMap::from([
            ("MCD_SERVER".to_owned(), "env".to_owned()),
            ("MCD_DIRECTORY".to_owned(), "env".to_owned()),
        ]);
        let c = resolve(&["--server".into(), "flag".into()], env, dir.path());
        assert_eq!(c.server.as_deref(), Some("flag"));
        assert_eq!(c.directory.as_deref(), Some("env"));
        assert_eq!(c.key_server.as_deref(), Some("file"));
    }

    #[test]
    fn explicit_config_path_and_bad_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("other.json");
        std::fs::write(&path, r#"{"suite":"transparent"}"#).unwrap();
        let c = resolve(&["--config".into(), path.display().to_string()], HashMap::new(), Path::new("/nonexistent"));
        assert_eq!(c.suite, SuiteChoice::Transparent);

        std::fs::write(&path, r#"{"bogus":1}"#).unwrap();
        let cli = Cli::try_parse_from(["mcd", "--config", path.to_str().unwrap()]).unwrap();
        assert!(CliConfig::resolve_with(&cli.config, |_| None, dir.path()).is_err());
        let cli = Cli::try_parse_from(["mcd"]).unwrap();
        assert!(
            CliConfig::resolve_with(&cli.config, |k| (k == "MCD_SUITE").then(|| "nope".into()), dir.path()).is_err()
        );
    }

    #[test]
    fn seeds() {
        let mut c = resolve(&[], HashMap::new(), Path::new("/nonexistent"));
        assert_eq!(c.setup_seed().unwrap(), None);
        c.seed = Some("ab".repeat(32));
        assert_eq!(c.setup_seed().unwrap(), Some([0xab; 32]));
        assert!(c.simulate_seed().is_err());
        c.seed = Some("7".into());
        assert_eq!(c.simulate_seed().unwrap(), Some(7));
        assert!(c.setup_seed().is_err());
    }
}
