//! Rule documents, one JSON file per rule.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use sir_core::Rule;

use crate::error::{Result, SirError};
use crate::persist::write_durable;

#[derive(Debug, Default)]
pub struct RuleBook {
    dir: Option<PathBuf>,
    rules: BTreeMap<String, Rule>,
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 128 && id.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)) && !id.starts_with('.')
}

impl RuleBook {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn open(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(SirError::io(dir))?;
        let mut rules = BTreeMap::new();
        for entry in fs::read_dir(dir).map_err(SirError::io(dir))? {
            let path = entry.map_err(SirError::io(dir))?.path();
            if path.extension().is_some_and(|e| e == "json") {
                let bytes = fs::read(&path).map_err(SirError::io(&path))?;
                let rule: Rule = serde_json::from_slice(&bytes).map_err(|e| SirError::parse(path.display().to_string(), e))?;
                rules.insert(rule.id.clone(), rule);
            }
        }
        Ok(Self {
            dir: Some(dir.to_path_buf()),
            rules,
        })
    }

    fn save(&self, rule: &Rule) -> Result<()> {
        if let Some(dir) = &self.dir {
            let bytes = serde_json::to_vec_pretty(rule).expect("rule serializes");
            write_durable(&dir.join(format!("{}.json", rule.id)), &bytes)?;
        }
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&Rule> {
        self.rules.get(id)
    }

    pub fn require(&self, id: &str) -> Result<&Rule> {
        self.get(id)
            .ok_or_else(|| sir_core::Error::NotFound(format!("rule {id}")).into())
    }

    pub fn list(&self) -> impl Iterator<Item = &Rule> {
        self.rules.values()
    }

    /// Adds a new rule. Re-submitting an identical document is accepted.
    pub fn create(&mut self, rule: Rule) -> Result<&Rule> {
        if !valid_id(&rule.id) {
            return Err(SirError::Invalid(format!("rule id {:?} must be 1-128 of [A-Za-z0-9._-]", rule.id)));
        }
        rule.validate()?;
        if let Some(existing) = self.rules.get(&rule.id) {
            if *existing == rule {
                return Ok(&self.rules[&rule.id]);
            }
            return Err(sir_core::Error::Rule(format!("rule {} already exists", rule.id)).into());
        }
        self.save(&rule)?;
        let id = rule.id.clone();
        self.rules.insert(id.clone(), rule);
        Ok(&self.rules[&id])
    }

    /// Applies `f` to a copy and stores it only if `f` succeeds.
    pub fn update(&mut self, id: &str, f: impl FnOnce(&mut Rule) -> sir_core::Result<()>) -> Result<&Rule> {
        let mut rule = self.require(id)?.clone();
        f(&mut rule)?;
        self.save(&rule)?;
        self.rules.insert(id.to_string(), rule);
        Ok(&self.rules[id])
    }
}
