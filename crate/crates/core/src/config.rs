//! Flat `key = value` configuration text.
//!
//! Blank lines and lines starting with `#` are ignored; a trailing `# ...`
//! after a value is a comment. Later keys override earlier ones. Per-user
//! settings use `user.<id>.<field>` on top of global defaults.

use std::collections::BTreeMap;
use std::str::FromStr;

use thiserror::Error;

use crate::scheduler::{UserConfig, UtilitySpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("missing required key `{0}`")]
    Missing(String),
    #[error("invalid value `{value}` for `{key}`: {reason}")]
    Invalid {
        key: String,
        value: String,
        reason: String,
    },
    #[error("unknown key `{0}`")]
    Unknown(String),
}

impl ConfigError {
    pub fn invalid(key: &str, value: impl ToString, reason: impl ToString) -> Self {
        ConfigError::Invalid {
            key: key.to_string(),
            value: value.to_string(),
            reason: reason.to_string(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvConfig {
    entries: BTreeMap<String, String>,
}

impl KvConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                reason: format!("expected `key = value`, got `{line}`"),
            })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(ConfigError::Syntax {
                    line: i + 1,
                    reason: "empty key".into(),
                });
            }
            entries.insert(key.to_string(), value.trim().to_string());
        }
        Ok(Self { entries })
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: ToString,
    {
        self.raw(key)
            .map(|v| v.parse::<T>().map_err(|e| ConfigError::invalid(key, v, e.to_string())))
            .transpose()
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T, ConfigError>
    where
        T::Err: ToString,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T, ConfigError>
    where
        T::Err: ToString,
    {
        self.get(key)?.ok_or_else(|| ConfigError::Missing(key.to_string()))
    }

    /// Comma-separated list; an empty value is an empty list.
    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, ConfigError>
    where
        T::Err: ToString,
    {
        let Some(v) = self.raw(key) else {
            return Ok(None);
        };
        parse_list(v)
            .map(Some)
            .map_err(|e| ConfigError::invalid(key, v, e))
    }
}

pub fn parse_list<T: FromStr>(text: &str) -> Result<Vec<T>, String>
where
    T::Err: ToString,
{
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|e| format!("`{s}`: {}", e.to_string())))
        .collect()
}

/// Global `alpha`, `beta`, `x_max`, `utility` with `user.<k>.*` overrides.
pub fn user_configs(kv: &KvConfig, users: usize, defaults: UserConfig) -> Result<Vec<UserConfig>, ConfigError> {
    let base = UserConfig {
        alpha: kv.get_or("alpha", defaults.alpha)?,
        beta: kv.get_or("beta", defaults.beta)?,
        x_max: kv.get_or("x_max", defaults.x_max)?,
        utility: kv.get_or::<UtilitySpec>("utility", defaults.utility)?,
    };
    let mut out = vec![base; users];
    for key in kv.keys() {
        let Some(rest) = key.strip_prefix("user.") else {
            continue;
        };
        let (id, field) = rest
            .split_once('.')
            .ok_or_else(|| ConfigError::Unknown(key.to_string()))?;
        let k: usize = id
            .parse()
            .map_err(|_| ConfigError::invalid(key, id, "user id must be an integer"))?;
        if k >= users {
            return Err(ConfigError::invalid(key, id, format!("only {users} users")));
        }
        match field {
            "alpha" => out[k].alpha = kv.require(key)?,
            "beta" => out[k].beta = kv.require(key)?,
            "x_max" => out[k].x_max = kv.require(key)?,
            "utility" => out[k].utility = kv.require(key)?,
            "peer" => {}
            _ => return Err(ConfigError::Unknown(key.to_string())),
        }
    }
    for (k, u) in out.iter().enumerate() {
        u.validate(k)
            .map_err(|e| ConfigError::invalid(&format!("user.{k}"), "", e))?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn defaults() -> UserConfig {
        UserConfig::new(0.5, 0.05, 3, UtilitySpec::LogOnePlus { nu: 1.0 })
    }

    #[test]
    fn parses_comments_and_overrides() {
        let kv = KvConfig::parse("# header\nslots = 10 # trailing\n\nV=2.5\nslots = 20\n").unwrap();
        assert_eq!(kv.require::<u64>("slots").unwrap(), 20);
        assert_eq!(kv.require::<f64>("V").unwrap(), 2.5);
        assert!(kv.get::<u64>("missing").unwrap().is_none());
    }

    #[test]
    fn syntax_errors_name_the_line() {
        assert_eq!(
            KvConfig::parse("a = 1\nbogus\n"),
            Err(ConfigError::Syntax {
                line: 2,
                reason: "expected `key = value`, got `bogus`".into()
            })
        );
    }

    #[test]
    fn bad_value_names_the_key() {
        let kv = KvConfig::parse("slots = ten").unwrap();
        let err = kv.require::<u64>("slots").unwrap_err();
        assert!(err.to_string().contains("`slots`"), "{err}");
    }

    #[test]
    fn lists() {
        let kv = KvConfig::parse("vs = 1, 2,5\nempty =").unwrap();
        assert_eq!(kv.get_list::<f64>("vs").unwrap(), Some(vec![1.0, 2.0, 5.0]));
        assert_eq!(kv.get_list::<f64>("empty").unwrap(), Some(vec![]));
    }

    #[test]
    fn per_user_overrides() {
        let kv = KvConfig::parse("alpha = 0.25\nuser.1.alpha = 0.75\nuser.1.utility = linear:1:2").unwrap();
        let users = user_configs(&kv, 3, defaults()).unwrap();
        assert_eq!(users[0].alpha, 0.25);
        assert_eq!(users[1].alpha, 0.75);
        assert_eq!(users[1].utility, UtilitySpec::PiecewiseLinear { nu: 1.0, theta: 2.0 });
        assert_eq!(users[2].beta, 0.05);
    }

    #[test]
    fn per_user_errors() {
        let kv = KvConfig::parse("user.9.alpha = 1").unwrap();
        assert!(user_configs(&kv, 3, defaults()).is_err());
        let kv = KvConfig::parse("user.0.colour = red").unwrap();
        assert!(matches!(user_configs(&kv, 3, defaults()), Err(ConfigError::Unknown(_))));
        let kv = KvConfig::parse("x_max = 0").unwrap();
        assert!(user_configs(&kv, 1, defaults()).is_err());
    }
}
