//! Matrix-factorization backbone and its checkpoint format.
//!
//! Checkpoint layout (version 1, all integers and floats little-endian):
//!
//! ```text
//! magic      8 bytes   "VBPRCKPT"
//! version    u32       1
//! dim        u64
//! users      u64
//! items      u64
//! config     u64 length + UTF-8 JSON echo of the training configuration
//! user rows  users × dim f64, row-major
//! item rows  items × dim f64, row-major
//! ```

use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{domain, Error, Result};
use crate::math::dot;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"VBPRCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel {
    dim: usize,
    n_users: usize,
    n_items: usize,
    users: Vec<f64>,
    items: Vec<f64>,
}

impl EmbeddingModel {
    pub fn zeros(n_users: usize, n_items: usize, dim: usize) -> Self {
        EmbeddingModel {
            dim,
            n_users,
            n_items,
            users: vec![0.0; n_users * dim],
            items: vec![0.0; n_items * dim],
        }
    }

    /// I.i.d. `N(0, std²)` entries.
    pub fn random<R: Rng + ?Sized>(n_users: usize, n_items: usize, dim: usize, std: f64, rng: &mut R) -> Result<Self> {
        if dim == 0 {
            return domain("embedding dimension must be at least 1");
        }
        let normal = Normal::new(0.0, std).map_err(|e| Error::Domain(format!("init std {std}: {e}")))?;
        let mut m = Self::zeros(n_users, n_items, dim);
        for v in m.users.iter_mut().chain(m.items.iter_mut()) {
            *v = normal.sample(rng);
        }
        Ok(m)
    }

    pub fn from_parts(dim: usize, users: Vec<f64>, items: Vec<f64>) -> Result<Self> {
        if dim == 0 || !users.len().is_multiple_of(dim) || !items.len().is_multiple_of(dim) {
            return domain("factor buffers do not match the embedding dimension");
        }
        Ok(EmbeddingModel {
            dim,
            n_users: users.len() / dim,
            n_items: items.len() / dim,
            users,
            items,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn user_count(&self) -> usize {
        self.n_users
    }

    pub fn item_count(&self) -> usize {
        self.n_items
    }

    #[inline]
    pub fn user(&self, u: u32) -> &[f64] {
        let s = u as usize * self.dim;
        &self.users[s..s + self.dim]
    }

    #[inline]
    pub fn item(&self, i: u32) -> &[f64] {
        let s = i as usize * self.dim;
        &self.items[s..s + self.dim]
    }

    #[inline]
    pub fn user_mut(&mut self, u: u32) -> &mut [f64] {
        let s = u as usize * self.dim;
        &mut self.users[s..s + self.dim]
    }

    #[inline]
    pub fn item_mut(&mut self, i: u32) -> &mut [f64] {
        let s = i as usize * self.dim;
        &mut self.items[s..s + self.dim]
    }

    pub fn user_factors(&self) -> &[f64] {
        &self.users
    }

    pub fn item_factors(&self) -> &[f64] {
        &self.items
    }

    pub(crate) fn factors_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.users, &mut self.items)
    }

    /// Inner product of the user and item rows.
    pub fn score(&self, u: u32, i: u32) -> Result<f64> {
        if u as usize >= self.n_users {
            return domain(format!("user {u} out of range {}", self.n_users));
        }
        if i as usize >= self.n_items {
            return domain(format!("item {i} out of range {}", self.n_items));
        }
        Ok(self.score_unchecked(u, i))
    }

    #[inline]
    pub fn score_unchecked(&self, u: u32, i: u32) -> f64 {
        dot(self.user(u), self.item(i))
    }

    /// Scores of every item for user `u`.
    pub fn score_all(&self, u: u32, out: &mut Vec<f64>) {
        let uv = self.user(u);
        out.clear();
        out.extend(self.items.chunks_exact(self.dim).map(|row| dot(uv, row)));
    }

    pub fn is_finite(&self) -> bool {
        self.users.iter().chain(&self.items).all(|v| v.is_finite())
    }

    pub fn max_user_norm(&self) -> f64 {
        self.users.chunks_exact(self.dim).map(crate::math::norm).fold(0.0, f64::max)
    }

    pub fn max_item_norm(&self) -> f64 {
        self.items.chunks_exact(self.dim).map(crate::math::norm).fold(0.0, f64::max)
    }

    pub fn to_checkpoint_bytes(&self, config_echo: &str) -> Vec<u8> {
        let mut out = Vec::with_capacity(48 + config_echo.len() + 8 * (self.users.len() + self.items.len()));
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        for n in [self.dim, self.n_users, self.n_items, config_echo.len()] {
            out.extend_from_slice(&(n as u64).to_le_bytes());
        }
        out.extend_from_slice(config_echo.as_bytes());
        for v in self.users.iter().chain(&self.items) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Parses a checkpoint; returns the model and the config echo.
    pub fn from_checkpoint_bytes(bytes: &[u8]) -> Result<(Self, String)> {
        let mut cur = bytes;
        let mut take = |n: usize| -> Result<&[u8]> {
            if cur.len() < n {
                return domain("truncated checkpoint");
            }
            let (head, tail) = cur.split_at(n);
            cur = tail;
            Ok(head)
        };
        if take(8)? != CHECKPOINT_MAGIC {
            return domain("not a checkpoint file");
        }
        let version = u32::from_le_bytes(take(4)?.try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return domain(format!("unsupported checkpoint version {version}"));
        }
        let mut read_u64 = || -> Result<usize> { Ok(u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize) };
        let dim = read_u64()?;
        let n_users = read_u64()?;
        let n_items = read_u64()?;
        let cfg_len = read_u64()?;
        let config = String::from_utf8(take(cfg_len)?.to_vec()).map_err(|_| Error::Domain("config echo is not utf-8".into()))?;
        let mut read_rows = |n: usize| -> Result<Vec<f64>> {
            Ok(take(n * dim * 8)?
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect())
        };
        let users = read_rows(n_users)?;
        let items = read_rows(n_items)?;
        if !cur.is_empty() {
            return domain("trailing bytes after checkpoint");
        }
        Ok((
            EmbeddingModel {
                dim,
                n_users,
                n_items,
                users,
                items,
            },
            config,
        ))
    }

    pub fn save(&self, path: &Path, config_echo: &str) -> Result<()> {
        fs::write(path, self.to_checkpoint_bytes(config_echo)).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<(Self, String)> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint_bytes(&bytes)
    }
}
