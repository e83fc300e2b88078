//! Random aggregation groups and their summed series.

use std::collections::HashSet;
use std::io::{Read, Write};

use rand::seq::index;

use crate::data::{Dataset, LoadSeries};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Group {
    pub id: String,
    /// Member positions in the dataset, ascending.
    pub members: Vec<usize>,
    /// Sum of member mean loads (kWh).
    pub mean_w: f64,
}

impl Group {
    pub fn size(&self) -> usize {
        self.members.len()
    }

    pub fn member_ids<'a>(&'a self, dataset: &'a Dataset) -> impl Iterator<Item = &'a str> + 'a {
        self.members
            .iter()
            .map(|&i| dataset.customers()[i].id.as_str())
    }

    /// Builds a group from customer ids, recomputing `mean_w` from the dataset.
    pub fn from_ids<S: AsRef<str>>(
        dataset: &Dataset,
        id: impl Into<String>,
        ids: &[S],
    ) -> Result<Self> {
        let mut members = Vec::with_capacity(ids.len());
        for m in ids {
            let m = m.as_ref();
            members.push(
                dataset
                    .position(m)
                    .ok_or_else(|| Error::UnknownCustomer(m.to_string()))?,
            );
        }
        members.sort_unstable();
        if members.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidParameter("duplicate group member".into()));
        }
        let mean_w = members.iter().map(|&i| dataset.customers()[i].mean_w).sum();
        Ok(Self {
            id: id.into(),
            members,
            mean_w,
        })
    }
}

pub fn group_id(size: usize, replicate: usize) -> String {
    format!("n{size}-r{replicate}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateSeries {
    pub group: Group,
    pub series: LoadSeries,
}

/// `replicates` groups per size; members drawn without replacement inside a
/// group, groups drawn independently of each other. One RNG stream, consumed
/// in `sizes` order.
pub fn sample_groups(
    dataset: &Dataset,
    sizes: &[usize],
    replicates: usize,
    seed: u64,
) -> Result<Vec<Group>> {
    if replicates == 0 {
        return Err(Error::InvalidParameter("replicates must be >= 1".into()));
    }
    let population = dataset.len();
    let mut seen = HashSet::new();
    for &size in sizes {
        if size == 0 {
            return Err(Error::InvalidParameter("group size must be >= 1".into()));
        }
        if size > population {
            return Err(Error::SizeExceedsPopulation { size, population });
        }
        if !seen.insert(size) {
            return Err(Error::InvalidParameter(format!(
                "group size {size} listed twice"
            )));
        }
    }
    let mut rng = rng::stream(seed, rng::GROUPS, 0);
    let customers = dataset.customers();
    let mut groups = Vec::with_capacity(sizes.len() * replicates);
    for &size in sizes {
        for r in 0..replicates {
            let mut picked = index::sample(&mut rng, population, size).into_vec();
            picked.sort_unstable();
            let mean_w = picked.iter().map(|&i| customers[i].mean_w).sum();
            groups.push(Group {
                id: group_id(size, r),
                members: picked,
                mean_w,
            });
        }
    }
    Ok(groups)
}

pub fn aggregate_series(dataset: &Dataset, group: &Group) -> Result<AggregateSeries> {
    let mut acc = vec![0.0; dataset.series_len()];
    for &i in &group.members {
        let c = dataset
            .customers()
            .get(i)
            .ok_or_else(|| Error::UnknownCustomer(format!("#{i}")))?;
        for (a, v) in acc.iter_mut().zip(c.series.values()) {
            *a += v;
        }
    }
    Ok(AggregateSeries {
        group: group.clone(),
        series: LoadSeries::new(acc, dataset.interval(), dataset.start())?,
    })
}

/// `group_id,size,mean_w,member_ids` with members joined by `;`.
pub fn write_group_manifest<W: Write>(
    dataset: &Dataset,
    groups: &[Group],
    out: W,
    header_comment: Option<&str>,
) -> Result<()> {
    let mut out = out;
    if let Some(c) = header_comment {
        writeln!(out, "# {c}").map_err(|e| Error::io("<manifest>", e))?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["group_id", "size", "mean_w", "member_ids"])?;
    for g in groups {
        w.write_record([
            g.id.as_str(),
            &g.size().to_string(),
            &g.mean_w.to_string(),
            &g.member_ids(dataset).collect::<Vec<_>>().join(";"),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<manifest>", e))?;
    Ok(())
}

/// Reads a manifest back; `mean_w` is recomputed against `dataset` and must agree.
pub fn read_group_manifest<R: Read>(dataset: &Dataset, input: R) -> Result<Vec<Group>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(input);
    let mut groups = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let malformed = |reason: &str| Error::MalformedRow {
            line,
            reason: reason.to_string(),
        };
        if rec.len() != 4 {
            return Err(malformed("expected 4 fields"));
        }
        let ids: Vec<&str> = rec[3].split(';').collect();
        let size: usize = rec[1].parse().map_err(|_| malformed("bad size"))?;
        let recorded: f64 = rec[2].parse().map_err(|_| malformed("bad mean_w"))?;
        let g = Group::from_ids(dataset, &rec[0], &ids)?;
        if g.size() != size {
            return Err(malformed("size does not match member count"));
        }
        if (g.mean_w - recorded).abs() > 1e-9 * recorded.abs().max(1e-300) {
            return Err(malformed("mean_w does not match dataset"));
        }
        groups.push(Group {
            mean_w: recorded,
            ..g
        });
    }
    Ok(groups)
}
