//! Dataset readers.
//!
//! WS-DREAM `rtMatrix.txt`: one whitespace-separated line per user, one
//! column per service, `-1` for a missing measurement. MovieLens
//! `ratings.dat`: `UserID::MovieID::Rating::Timestamp` lines with 1-based ids.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::error::{PdsrError, Result};

pub const WSDREAM_USERS: usize = 339;
pub const WSDREAM_SERVICES: usize = 5825;
pub const MOVIELENS_USERS: usize = 6040;
pub const MOVIELENS_MOVIES: usize = 3952;

/// User-major matrix of raw observations; `NaN` marks a missing entry.
#[derive(Debug, Clone, PartialEq)]
pub struct RawMatrix {
    pub user_ids: Vec<u64>,
    pub n_items: usize,
    pub values: Vec<f64>,
}

impl RawMatrix {
    pub fn new(user_ids: Vec<u64>, n_items: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != user_ids.len() * n_items {
            return Err(PdsrError::invalid(format!(
                "matrix has {} entries, expected {} × {n_items}",
                values.len(),
                user_ids.len()
            )));
        }
        Ok(RawMatrix { user_ids, n_items, values })
    }

    pub fn n_users(&self) -> usize {
        self.user_ids.len()
    }

    pub fn row(&self, user: usize) -> &[f64] {
        &self.values[user * self.n_items..(user + 1) * self.n_items]
    }

    pub fn observed(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().copied().filter(|v| !v.is_nan())
    }
}

/// User-major matrix of non-negative QoS values; 0 marks a missing entry.
#[derive(Debug, Clone, PartialEq)]
pub struct QosMatrix {
    pub user_ids: Vec<u64>,
    pub n_items: usize,
    pub values: Vec<f64>,
}

impl QosMatrix {
    pub fn n_users(&self) -> usize {
        self.user_ids.len()
    }

    pub fn row(&self, user: usize) -> &[f64] {
        &self.values[user * self.n_items..(user + 1) * self.n_items]
    }

    pub fn observed_count(&self, user: usize) -> usize {
        self.row(user).iter().filter(|v| **v != 0.0).count()
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> PdsrError {
    PdsrError::Parse {
        line,
        message: message.into(),
    }
}

pub fn load_wsdream(path: &Path) -> Result<RawMatrix> {
    parse_wsdream(BufReader::new(File::open(path)?))
}

pub fn parse_wsdream<R: BufRead>(reader: R) -> Result<RawMatrix> {
    let mut values = Vec::new();
    let mut n_items = 0;
    let mut n_users = 0;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let before = values.len();
        for field in line.split_whitespace() {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(lineno, format!("not a number: {field:?}")))?;
            if v == -1.0 {
                values.push(f64::NAN);
            } else if v.is_finite() && v >= 0.0 {
                values.push(v);
            } else {
                return Err(parse_err(lineno, format!("invalid QoS value {field}")));
            }
        }
        let width = values.len() - before;
        if n_users == 0 {
            n_items = width;
        } else if width != n_items {
            return Err(parse_err(lineno, format!("row has {width} columns, expected {n_items}")));
        }
        n_users += 1;
    }
    if n_users == 0 {
        return Err(parse_err(1, "no data rows"));
    }
    if (n_users, n_items) != (WSDREAM_USERS, WSDREAM_SERVICES) {
        log::warn!("WS-DREAM matrix is {n_users} × {n_items}, expected {WSDREAM_USERS} × {WSDREAM_SERVICES}");
    }
    RawMatrix::new((0..n_users as u64).collect(), n_items, values)
}

pub fn load_movielens(path: &Path) -> Result<RawMatrix> {
    parse_movielens(BufReader::new(File::open(path)?))
}

/// Users and movies are laid out densely by id, so row `u` is user `u + 1`
/// and column `m` is movie `m + 1`.
pub fn parse_movielens<R: BufRead>(reader: R) -> Result<RawMatrix> {
    let mut triples: Vec<(usize, usize, f64)> = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.trim().split("::").collect();
        if fields.len() != 4 {
            return Err(parse_err(lineno, format!("expected 4 '::'-separated fields, got {}", fields.len())));
        }
        let id = |s: &str, what: &str| -> Result<usize> {
            match s.parse::<usize>() {
                Ok(v) if v >= 1 => Ok(v),
                _ => Err(parse_err(lineno, format!("invalid {what} {s:?}"))),
            }
        };
        let user = id(fields[0], "user id")?;
        let movie = id(fields[1], "movie id")?;
        let rating: f64 = fields[2]
            .parse()
            .map_err(|_| parse_err(lineno, format!("invalid rating {:?}", fields[2])))?;
        if !(rating.is_finite() && rating > 0.0) {
            return Err(parse_err(lineno, format!("rating must be positive, got {rating}")));
        }
        fields[3]
            .parse::<u64>()
            .map_err(|_| parse_err(lineno, format!("invalid timestamp {:?}", fields[3])))?;
        triples.push((user, movie, rating));
    }
    if triples.is_empty() {
        return Err(parse_err(1, "no ratings"));
    }
    let n_users = triples.iter().map(|t| t.0).max().unwrap_or(0);
    let n_items = triples.iter().map(|t| t.1).max().unwrap_or(0);
    if (n_users, n_items) != (MOVIELENS_USERS, MOVIELENS_MOVIES) {
        log::warn!("MovieLens matrix is {n_users} × {n_items}, expected {MOVIELENS_USERS} × {MOVIELENS_MOVIES}");
    }
    let mut values = vec![f64::NAN; n_users * n_items];
    for (user, movie, rating) in triples {
        values[(user - 1) * n_items + movie - 1] = rating;
    }
    RawMatrix::new((1..=n_users as u64).collect(), n_items, values)
}
