//! Python bindings: flow extraction, models, metrics and the experiment
//! runner.

use std::collections::HashMap;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use flowdrift::eval;
use flowdrift::features::io::{read_feature_csv, write_feature_csv};
use flowdrift::features::{self, extract_batch, IpLabeler, FEATURE_COUNT, FEATURE_NAMES};
use flowdrift::flow::{self, io as packet_io, FilterPolicy, FlowSession, PacketRecord, Timestamp};
use flowdrift::models::{
    fit_offline, partial_fit, AnyModel, Checkpoint, LinearKind, LinearModel, LwfConfig, LwfLearner,
    MlpModel, OnlineClassifier, Provenance,
};
use flowdrift::preprocess::{self, ClassWeights, Example, SplitPlan};
use flowdrift::protocol::{emit_reports, Experiment, ExperimentConfig};
use flowdrift::synth;

fn to_py(e: flowdrift::Error) -> PyErr {
    match e {
        flowdrift::Error::Io { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

trait OrPy<T> {
    fn py_err(self) -> PyResult<T>;
}

impl<T> OrPy<T> for flowdrift::Result<T> {
    fn py_err(self) -> PyResult<T> {
        self.map_err(to_py)
    }
}

#[pyclass(name = "Packet", from_py_object)]
#[derive(Clone)]
struct PyPacket {
    inner: PacketRecord,
}

#[pymethods]
impl PyPacket {
    #[new]
    #[pyo3(signature = (ts, src_ip, dst_ip, src_port, dst_port, proto, ip_len, payload_len, ttl=64, tcp_flags=0, tcp_window=0, tcp_seq=0, tcp_ack=0))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        ts: f64,
        src_ip: String,
        dst_ip: String,
        src_port: u16,
        dst_port: u16,
        proto: u16,
        ip_len: u32,
        payload_len: u32,
        ttl: u8,
        tcp_flags: u8,
        tcp_window: u32,
        tcp_seq: u32,
        tcp_ack: u32,
    ) -> Self {
        PyPacket {
            inner: PacketRecord {
                ts: Timestamp::from_secs_f64(ts),
                src_ip,
                dst_ip,
                src_port,
                dst_port,
                proto,
                ip_len,
                payload_len,
                ttl,
                tcp_flags,
                tcp_window,
                tcp_seq,
                tcp_ack,
            },
        }
    }

    #[getter]
    fn ts(&self) -> f64 {
        self.inner.ts.as_secs_f64()
    }
    #[getter]
    fn src_ip(&self) -> &str {
        &self.inner.src_ip
    }
    #[getter]
    fn dst_ip(&self) -> &str {
        &self.inner.dst_ip
    }
    #[getter]
    fn proto(&self) -> u16 {
        self.inner.proto
    }
    #[getter]
    fn ip_len(&self) -> u32 {
        self.inner.ip_len
    }

    fn __repr__(&self) -> String {
        format!(
            "Packet(ts={}, {}:{} -> {}:{}, proto={}, ip_len={})",
            self.inner.ts,
            self.inner.src_ip,
            self.inner.src_port,
            self.inner.dst_ip,
            self.inner.dst_port,
            self.inner.proto,
            self.inner.ip_len
        )
    }
}

#[pyclass(name = "Flow", from_py_object)]
#[derive(Clone)]
struct PyFlow {
    inner: FlowSession,
}

#[pymethods]
impl PyFlow {
    #[getter]
    fn id(&self) -> u64 {
        self.inner.id
    }
    #[getter]
    fn initiator(&self) -> (String, u16) {
        (self.inner.initiator.ip.clone(), self.inner.initiator.port)
    }
    #[getter]
    fn proto(&self) -> u16 {
        self.inner.key.proto
    }
    #[getter]
    fn fwd_packets(&self) -> usize {
        self.inner.fwd_packets.len()
    }
    #[getter]
    fn bwd_packets(&self) -> usize {
        self.inner.bwd_packets.len()
    }
    #[getter]
    fn closed(&self) -> bool {
        self.inner.is_closed()
    }

    /// The 28 flow features in column order.
    fn features(&self) -> Vec<f64> {
        features::extract(&self.inner).values.to_vec()
    }

    fn __repr__(&self) -> String {
        format!(
            "Flow(id={}, proto={}, fwd={}, bwd={})",
            self.inner.id,
            self.inner.key.proto,
            self.inner.fwd_packets.len(),
            self.inner.bwd_packets.len()
        )
    }
}

#[pyfunction]
fn read_packets(path: &str) -> PyResult<Vec<PyPacket>> {
    Ok(packet_io::read_packets(path)
        .py_err()?
        .into_iter()
        .map(|inner| PyPacket { inner })
        .collect())
}

/// Filters (ARP dropped by default) and assembles packets into flows.
#[pyfunction]
#[pyo3(signature = (packets, idle_timeout=flow::DEFAULT_IDLE_TIMEOUT_SECS, drop_icmp=false))]
fn assemble(packets: Vec<PyPacket>, idle_timeout: f64, drop_icmp: bool) -> PyResult<Vec<PyFlow>> {
    let mut policy = FilterPolicy::default();
    if drop_icmp {
        policy = policy.dropping(flow::PROTO_ICMP);
    }
    let (kept, _) = flow::filter_packets(packets.into_iter().map(|p| p.inner), &policy).py_err()?;
    Ok(flow::assemble(kept, idle_timeout)
        .into_iter()
        .map(|inner| PyFlow { inner })
        .collect())
}

/// Packet file to labeled feature CSV. Returns `(rows written, flows skipped)`.
#[pyfunction]
#[pyo3(signature = (packets_path, output_path, attackers, origin="unknown", idle_timeout=flow::DEFAULT_IDLE_TIMEOUT_SECS))]
fn extract_to_csv(
    packets_path: &str,
    output_path: &str,
    attackers: HashMap<String, String>,
    origin: &str,
    idle_timeout: f64,
) -> PyResult<(usize, usize)> {
    let packets = packet_io::read_packets(packets_path).py_err()?;
    let (kept, _) = flow::filter_packets(packets, &FilterPolicy::default()).py_err()?;
    let flows = flow::assemble(kept, idle_timeout);
    let labeler = attackers
        .into_iter()
        .fold(IpLabeler::new(), |l, (ip, kind)| l.attacker(ip, kind));
    let batch = extract_batch(&flows, &labeler, origin);
    write_feature_csv(&batch.samples, output_path).py_err()?;
    Ok((batch.samples.len(), batch.dropped))
}

/// Feature CSV as `(rows, labels, attack_types)`.
#[pyfunction]
#[allow(clippy::type_complexity)]
fn read_features(path: &str) -> PyResult<(Vec<Vec<f64>>, Vec<u8>, Vec<String>)> {
    let samples = read_feature_csv(path).py_err()?;
    let x = samples.iter().map(|s| s.features.values.to_vec()).collect();
    let y = samples.iter().map(|s| s.label.as_u8()).collect();
    let t = samples.into_iter().map(|s| s.attack_type).collect();
    Ok((x, y, t))
}

/// Seeded drifting pair: `((x_offline, y_offline), (x_incoming, y_incoming))`.
#[pyfunction]
#[pyo3(signature = (offline=10_000, incoming=10_000, seed=42))]
#[allow(clippy::type_complexity)]
fn drift_pair(
    offline: usize,
    incoming: usize,
    seed: u64,
) -> ((Vec<Vec<f64>>, Vec<u8>), (Vec<Vec<f64>>, Vec<u8>)) {
    let cfg = synth::DriftPairConfig {
        offline,
        incoming,
        seed,
        ..Default::default()
    };
    let (a, b) = synth::drift_pair(&cfg);
    let unpack = |v: Vec<features::LabeledSample>| {
        (
            v.iter().map(|s| s.features.values.to_vec()).collect(),
            v.iter().map(|s| s.label.as_u8()).collect(),
        )
    };
    (unpack(a), unpack(b))
}

/// `(train, test)` sizes for `n` samples.
#[pyfunction]
#[pyo3(signature = (n, train_fraction=preprocess::DEFAULT_TRAIN_FRACTION))]
fn split_sizes(n: usize, train_fraction: f64) -> PyResult<(usize, usize)> {
    let plan = SplitPlan {
        train_fraction,
        ..Default::default()
    };
    plan.validate().py_err()?;
    let tr = plan.train_len(n);
    Ok((tr, n - tr))
}

/// Inverse-frequency weights `(benign, malicious)`.
#[pyfunction]
fn class_weights(labels: Vec<u8>) -> PyResult<(f64, f64)> {
    let w = preprocess::class_weights(labels).py_err()?;
    Ok((w.benign, w.malicious))
}

#[pyfunction]
fn auroc(scores: Vec<f64>, labels: Vec<u8>) -> PyResult<Option<f64>> {
    eval::auroc(&scores, &labels).py_err()
}

#[pyfunction]
fn forgetting_rate(acc_before: f64, acc_after: f64) -> PyResult<f64> {
    eval::forgetting_rate(acc_before, acc_after).py_err()
}

/// Confusion counts and derived metrics as a dict.
#[pyfunction]
fn metrics(preds: Vec<u8>, labels: Vec<u8>) -> PyResult<HashMap<String, f64>> {
    let c = eval::confusion(&preds, &labels).py_err()?;
    Ok(HashMap::from([
        ("tp".to_owned(), c.tp as f64),
        ("tn".to_owned(), c.tn as f64),
        ("fp".to_owned(), c.fp as f64),
        ("fn".to_owned(), c.fn_ as f64),
        ("accuracy".to_owned(), eval::accuracy(&c)),
        ("precision".to_owned(), eval::precision(&c)),
        ("recall".to_owned(), eval::recall(&c)),
        ("f1".to_owned(), eval::f1(&c)),
    ]))
}

fn examples(x: Vec<Vec<f64>>, y: Vec<u8>) -> PyResult<Vec<Example>> {
    if x.len() != y.len() {
        return Err(PyValueError::new_err(format!(
            "{} rows but {} labels",
            x.len(),
            y.len()
        )));
    }
    Ok(x.into_iter()
        .zip(y)
        .enumerate()
        .map(|(i, (x, y))| Example::new(i as u64, x, y))
        .collect())
}

fn weights(w: Option<(f64, f64)>) -> PyResult<ClassWeights> {
    match w {
        Some((b, m)) => ClassWeights::explicit(b, m).py_err(),
        None => Ok(ClassWeights::uniform()),
    }
}

/// Perceptron, logistic, hinge-loss SVM or MLP classifier.
#[pyclass(name = "Model", from_py_object)]
#[derive(Clone)]
struct PyModel {
    inner: AnyModel,
}

#[pymethods]
impl PyModel {
    #[new]
    #[pyo3(signature = (kind, dim=FEATURE_COUNT, eta=None, seed=0, hidden=None, l2=flowdrift::models::linear::DEFAULT_SVM_L2))]
    fn new(
        kind: &str,
        dim: usize,
        eta: Option<f64>,
        seed: u64,
        hidden: Option<Vec<usize>>,
        l2: f64,
    ) -> PyResult<Self> {
        let linear = |k: LinearKind, l2: f64| -> PyResult<AnyModel> {
            let eta = eta.unwrap_or(flowdrift::models::linear::DEFAULT_LINEAR_ETA);
            Ok(AnyModel::Linear(LinearModel::new(k, dim, eta, l2, seed).py_err()?))
        };
        let inner = match kind {
            "perceptron" => linear(LinearKind::Perceptron, 0.0)?,
            "logistic" => linear(LinearKind::Logistic, 0.0)?,
            "svm" => linear(LinearKind::SvmHinge, l2)?,
            "mlp" => {
                let mut sizes = vec![dim];
                sizes.extend(hidden.unwrap_or_else(|| flowdrift::models::mlp::DEFAULT_HIDDEN.to_vec()));
                sizes.push(2);
                let eta = eta.unwrap_or(flowdrift::models::mlp::DEFAULT_MLP_ETA);
                AnyModel::Mlp(MlpModel::new(&sizes, eta, seed).py_err()?)
            }
            other => {
                return Err(PyValueError::new_err(format!(
                    "unknown model kind `{other}` (perceptron, logistic, svm, mlp)"
                )))
            }
        };
        Ok(PyModel { inner })
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.kind_name()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.input_dim()
    }

    fn params(&self) -> Vec<f64> {
        self.inner.flat_params()
    }

    fn score(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.score(&x).py_err()
    }

    fn predict(&self, x: Vec<f64>) -> PyResult<u8> {
        self.inner.predict(&x).py_err()
    }

    fn predict_many(&self, xs: Vec<Vec<f64>>) -> PyResult<Vec<u8>> {
        xs.iter().map(|x| self.inner.predict(x).py_err()).collect()
    }

    fn score_many(&self, xs: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        xs.iter().map(|x| self.inner.score(x).py_err()).collect()
    }

    /// Multi-epoch training; returns the final mean loss.
    #[pyo3(signature = (x, y, epochs=5, class_weights=None))]
    fn fit(&mut self, x: Vec<Vec<f64>>, y: Vec<u8>, epochs: usize, class_weights: Option<(f64, f64)>) -> PyResult<f64> {
        let data = examples(x, y)?;
        let r = fit_offline(&mut self.inner, &data, epochs, &weights(class_weights)?).py_err()?;
        Ok(r.final_loss)
    }

    /// One in-order pass over a batch.
    #[pyo3(signature = (x, y, class_weights=None))]
    fn partial_fit(&mut self, x: Vec<Vec<f64>>, y: Vec<u8>, class_weights: Option<(f64, f64)>) -> PyResult<usize> {
        let data = examples(x, y)?;
        Ok(partial_fit(&mut self.inner, &data, &weights(class_weights)?)
            .py_err()?
            .samples)
    }

    /// An MLP wrapped for distillation against a frozen copy of itself.
    #[pyo3(signature = (lam=1.0, temperature=2.0))]
    fn with_lwf(&self, lam: f64, temperature: f64) -> PyResult<PyModel> {
        let AnyModel::Mlp(m) = &self.inner else {
            return Err(PyValueError::new_err("distillation needs an mlp model"));
        };
        let cfg = LwfConfig {
            lambda: lam,
            temperature,
        };
        Ok(PyModel {
            inner: AnyModel::Lwf(LwfLearner::new(m.clone(), cfg).py_err()?),
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        let provenance = Provenance {
            phase: "python".into(),
            samples_seen: 0,
            batch_index: -1,
        };
        Checkpoint::new(self.inner.clone(), provenance)
            .save(path)
            .py_err()
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<PyModel> {
        Ok(PyModel {
            inner: Checkpoint::load(path).py_err()?.model,
        })
    }

    fn __eq__(&self, other: &PyModel) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        format!("Model(kind={:?}, dim={})", self.inner.kind_name(), self.inner.input_dim())
    }
}

/// Runs every phase from a config file (plus key overrides), writes the
/// reports, and returns the report as a JSON string.
#[pyfunction]
#[pyo3(signature = (config_path=None, overrides=None))]
fn run_protocol(config_path: Option<&str>, overrides: Option<HashMap<String, String>>) -> PyResult<String> {
    let mut cfg = match config_path {
        Some(p) => ExperimentConfig::from_file(p).py_err()?,
        None => ExperimentConfig::default(),
    };
    let mut pairs: Vec<_> = overrides.unwrap_or_default().into_iter().collect();
    pairs.sort();
    for (k, v) in pairs {
        cfg.set(&k, &v).py_err()?;
    }
    let mut ex = Experiment::from_config(cfg).py_err()?;
    let report = ex.run_all().py_err()?;
    emit_reports(&report, &ex.cfg.output_dir).py_err()?;
    serde_json::to_string(&report).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pymodule]
fn flowdrift_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("FEATURE_NAMES", FEATURE_NAMES.to_vec())?;
    m.add("FEATURE_COUNT", FEATURE_COUNT)?;
    m.add_class::<PyPacket>()?;
    m.add_class::<PyFlow>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(read_packets, m)?)?;
    m.add_function(wrap_pyfunction!(assemble, m)?)?;
    m.add_function(wrap_pyfunction!(extract_to_csv, m)?)?;
    m.add_function(wrap_pyfunction!(read_features, m)?)?;
    m.add_function(wrap_pyfunction!(drift_pair, m)?)?;
    m.add_function(wrap_pyfunction!(split_sizes, m)?)?;
    m.add_function(wrap_pyfunction!(class_weights, m)?)?;
    m.add_function(wrap_pyfunction!(auroc, m)?)?;
    m.add_function(wrap_pyfunction!(forgetting_rate, m)?)?;
    m.add_function(wrap_pyfunction!(metrics, m)?)?;
    m.add_function(wrap_pyfunction!(run_protocol, m)?)?;
    Ok(())
}
