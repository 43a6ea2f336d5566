//! File formats: distribution configs and grids, and JSON/CSV writers that
//! keep 17 significant digits.

use std::fs::File;
use std::io::{self, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::distributions::{Distribution, GridSpec};
use crate::error::Result;

/// `x` in scientific notation with 17 significant digits.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Pretty JSON whose floats carry 17 significant digits, so values
/// round-trip exactly.
pub struct Json17<'a>(PrettyFormatter<'a>);

impl Default for Json17<'_> {
    fn default() -> Self {
        Self(PrettyFormatter::new())
    }
}

impl Formatter for Json17<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{}", fmt17(value))
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }

    fn begin_array<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.begin_array(writer)
    }

    fn end_array<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_array(writer)
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(writer, first)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_array_value(writer)
    }

    fn begin_object<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.begin_object(writer)
    }

    fn end_object<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_object(writer)
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(writer, first)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.begin_object_value(writer)
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_object_value(writer)
    }
}

pub fn to_writer17<W: Write, T: Serialize + ?Sized>(writer: W, value: &T) -> Result<()> {
    let mut ser = serde_json::Serializer::with_formatter(writer, Json17::default());
    value.serialize(&mut ser)?;
    Ok(())
}

pub fn to_string17<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    to_writer17(&mut buf, value)?;
    Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
}

/// Analytic family as stored in JSON:
/// `{"family": "lognormal", "params": {"mu": 4.6, "sigma": 0.2}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "lowercase")]
pub enum FamilyConfig {
    Uniform { low: f64, high: f64 },
    Exponential { rate: f64 },
    Normal { mean: f64, sd: f64 },
    Lognormal { mu: f64, sigma: f64 },
    Mixture { components: Vec<MixtureComponent> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    #[serde(flatten)]
    pub component: FamilyConfig,
}

impl FamilyConfig {
    pub fn build(&self) -> Result<Distribution> {
        match self {
            FamilyConfig::Uniform { low, high } => Distribution::uniform(*low, *high),
            FamilyConfig::Exponential { rate } => Distribution::exponential(*rate),
            FamilyConfig::Normal { mean, sd } => Distribution::normal(*mean, *sd),
            FamilyConfig::Lognormal { mu, sigma } => Distribution::lognormal(*mu, *sigma),
            FamilyConfig::Mixture { components } => Distribution::mixture(
                components
                    .iter()
                    .map(|c| Ok((c.weight, c.component.build()?)))
                    .collect::<Result<Vec<_>>>()?,
            ),
        }
    }
}

/// Reads a two-column `x,phi` CSV with a header row.
pub fn read_grid_csv<R: Read>(reader: R) -> Result<GridSpec> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut nodes = Vec::new();
    let mut values = Vec::new();
    for row in rdr.deserialize() {
        let (x, phi): (f64, f64) = row?;
        nodes.push(x);
        values.push(phi);
    }
    Ok(GridSpec::new(nodes, values))
}

/// Writes `header` then one row per tuple, all with 17 significant digits.
pub fn write_csv<W: Write, const N: usize>(writer: W, header: [&str; N], rows: &[[f64; N]]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(|v| fmt17(*v)))?;
    }
    w.flush()?;
    Ok(())
}

/// Loads a distribution from a `.json` family config or an `x,phi` grid CSV.
pub fn load_distribution(path: &Path) -> Result<Distribution> {
    let file = BufReader::new(File::open(path)?);
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        let cfg: FamilyConfig = serde_json::from_reader(file)?;
        cfg.build()
    } else {
        Distribution::from_grid(read_grid_csv(file)?)
    }
}
