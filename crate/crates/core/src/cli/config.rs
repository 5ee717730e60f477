//! Flat `key=value` run configuration shared by the config file and the
//! command-line flags.

use std::fmt::Display;
use std::str::FromStr;

use crate::asymptotics::Objective;
use crate::error::{Error, Result};

fn parse_value<T>(key: &str, value: &str) -> Result<T>
where
    T: FromStr,
    T::Err: Display,
{
    value
        .parse()
        .map_err(|e| Error::config(key, format!("cannot parse `{value}`: {e}")))
}

macro_rules! run_config {
    ($($field:ident: $ty:ty = $key:literal;)*) => {
        /// Every setting of a run. Unset fields fall back to per-command
        /// defaults.
        #[derive(Debug, Clone, Default, PartialEq)]
        pub struct RunConfig {
            $(pub $field: Option<$ty>,)*
        }

        impl RunConfig {
            /// Recognized keys, in output order.
            pub const KEYS: &'static [&'static str] = &[$($key),*];

            /// One `key=value` line per set field.
            pub fn format(&self) -> String {
                let mut out = String::new();
                $(
                    if let Some(v) = &self.$field {
                        out.push_str(&format!("{}={}\n", $key, v));
                    }
                )*
                out
            }

            fn set(&mut self, key: &str, value: &str) -> Result<()> {
                match key {
                    $($key => self.$field = Some(parse_value($key, value)?),)*
                    other => return Err(Error::config(other, "unknown configuration key")),
                }
                Ok(())
            }

            /// Fields set in `overrides` replace those of `self`.
            pub fn merge(self, overrides: RunConfig) -> RunConfig {
                RunConfig {
                    $($field: overrides.$field.or(self.$field),)*
                }
            }
        }
    };
}

run_config! {
    model: String = "model";
    noise: String = "noise";
    nu: f64 = "nu";
    proportion: f64 = "proportion";
    t: f64 = "T";
    grid_n: usize = "grid-n";
    grid_range: f64 = "grid-range";
    seed: u64 = "seed";
    replicates: usize = "replicates";
    out: String = "out";
    threads: usize = "threads";
    objective: Objective = "objective";
    eps1: f64 = "eps1";
    eps2: f64 = "eps2";
    mass_left: f64 = "mass-left";
    from: f64 = "from";
    to: f64 = "to";
    points: usize = "points";
    max_iter: usize = "max-iter";
}

impl RunConfig {
    /// Parses `key=value` lines. Blank lines and lines starting with `#` are
    /// skipped; a repeated key keeps its last value.
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = RunConfig::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::config(
                    format!("line {}", n + 1),
                    format!("expected key=value, got `{line}`"),
                ));
            };
            config.set(key.trim(), value.trim())?;
        }
        Ok(config)
    }
}

impl FromStr for RunConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RunConfig::parse(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_comments_and_whitespace() {
        let c = RunConfig::parse("# run\nmodel = variance:1\n\nnu=1\nT=1000\nobjective=kl\n").unwrap();
        assert_eq!(c.model.as_deref(), Some("variance:1"));
        assert_eq!(c.nu, Some(1.0));
        assert_eq!(c.t, Some(1000.0));
        assert_eq!(c.objective, Some(Objective::Kl));
        assert_eq!(c.seed, None);
    }

    #[test]
    fn errors_name_the_field() {
        match RunConfig::parse("nu=abc") {
            Err(Error::Config { field, .. }) => assert_eq!(field, "nu"),
            other => panic!("{other:?}"),
        }
        match RunConfig::parse("colour=red") {
            Err(Error::Config { field, .. }) => assert_eq!(field, "colour"),
            other => panic!("{other:?}"),
        }
        assert!(RunConfig::parse("just words").is_err());
    }

    #[test]
    fn flags_override_file() {
        let file = RunConfig::parse("nu=2\nT=10").unwrap();
        let flags = RunConfig {
            nu: Some(5.0),
            ..RunConfig::default()
        };
        let merged = file.merge(flags);
        assert_eq!(merged.nu, Some(5.0));
        assert_eq!(merged.t, Some(10.0));
    }

    #[test]
    fn keys_are_listed_in_format_order() {
        assert_eq!(RunConfig::KEYS.len(), 19);
        assert_eq!(RunConfig::KEYS[4], "T");
    }

    proptest! {
        #[test]
        fn format_parse_round_trip(
            nu in proptest::option::of(1e-6f64..1e6),
            t in proptest::option::of(1.0f64..1e9),
            seed in proptest::option::of(any::<u64>()),
            grid_n in proptest::option::of(3usize..5000),
            theta in -10.0f64..10.0,
            kl in any::<bool>(),
        ) {
            let c = RunConfig {
                model: Some(format!("mean:{theta}")),
                noise: Some("theory:mse:all-data".into()),
                nu,
                t,
                seed,
                grid_n,
                objective: Some(if kl { Objective::Kl } else { Objective::Mse }),
                ..RunConfig::default()
            };
            let text = c.format();
            let back = RunConfig::parse(&text).unwrap();
            prop_assert_eq!(&back, &c);
            prop_assert_eq!(back.format(), text);
        }
    }
}
