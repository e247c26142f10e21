//! Parameters and per-instance math: the hidden vector built from local and
//! global context, the negative-sampling loss, and its analytic gradients.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;

use crate::error::{Error, Result};

/// Inputs with `|x|` above this are clamped before the logistic.
pub const SIGMOID_CLAMP: f64 = 30.0;

/// The logistic function, clamped to `[-30, 30]`.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    let x = x.clamp(-SIGMOID_CLAMP, SIGMOID_CLAMP);
    1.0 / (1.0 + (-x).exp())
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `ln sigmoid(x)`, exact for all finite `x`.
#[inline]
pub fn log_sigmoid(x: f64) -> f64 {
    -softplus(-x)
}

/// Read access to input (`u`) and output (`v`) embedding columns.
pub trait ParamStore {
    fn dim(&self) -> usize;
    fn vocab_size(&self) -> usize;
    /// `acc += weight * u_word`
    fn accumulate_input(&self, word: u32, weight: f64, acc: &mut [f64]);
    /// `acc += weight * v_word`
    fn accumulate_output(&self, word: u32, weight: f64, acc: &mut [f64]);
    /// `v_word . z`
    fn output_dot(&self, word: u32, z: &[f64]) -> f64;
}

/// In-place updates of embedding columns.
pub trait ParamUpdate {
    /// `u_word += coef * delta`
    fn add_to_input(&mut self, word: u32, coef: f64, delta: &[f64]);
    /// `v_word += coef * delta`
    fn add_to_output(&mut self, word: u32, coef: f64, delta: &[f64]);
}

/// Input matrix `U` and output matrix `V`, both `h x v`, stored one column
/// (word) at a time.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    dim: usize,
    vocab_size: usize,
    input: Vec<f64>,
    output: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(vocab_size: usize, dim: usize) -> Self {
        ModelParams {
            dim,
            vocab_size,
            input: vec![0.0; vocab_size * dim],
            output: vec![0.0; vocab_size * dim],
        }
    }

    /// `U` uniform in `(-0.5/h, 0.5/h)`, `V = 0`. Initial logits are all zero.
    pub fn init<R: Rng + ?Sized>(vocab_size: usize, dim: usize, rng: &mut R) -> Self {
        let mut params = Self::zeros(vocab_size, dim);
        let h = dim as f64;
        for x in &mut params.input {
            *x = (rng.gen::<f64>() - 0.5) / h;
        }
        params
    }

    pub fn from_parts(vocab_size: usize, dim: usize, input: Vec<f64>, output: Vec<f64>) -> Result<Self> {
        if input.len() != vocab_size * dim || output.len() != vocab_size * dim {
            return Err(Error::Mismatch(format!(
                "expected {} entries per matrix for v={vocab_size}, h={dim}; got {} and {}",
                vocab_size * dim,
                input.len(),
                output.len()
            )));
        }
        Ok(ModelParams {
            dim,
            vocab_size,
            input,
            output,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn input(&self, word: u32) -> &[f64] {
        let start = word as usize * self.dim;
        &self.input[start..start + self.dim]
    }

    pub fn input_mut(&mut self, word: u32) -> &mut [f64] {
        let start = word as usize * self.dim;
        &mut self.input[start..start + self.dim]
    }

    pub fn output(&self, word: u32) -> &[f64] {
        let start = word as usize * self.dim;
        &self.output[start..start + self.dim]
    }

    pub fn output_mut(&mut self, word: u32) -> &mut [f64] {
        let start = word as usize * self.dim;
        &mut self.output[start..start + self.dim]
    }

    /// All input columns, word-major.
    pub fn input_matrix(&self) -> &[f64] {
        &self.input
    }

    pub fn output_matrix(&self) -> &[f64] {
        &self.output
    }

    pub fn is_finite(&self) -> bool {
        self.input.iter().chain(&self.output).all(|x| x.is_finite())
    }
}

impl ParamStore for ModelParams {
    fn dim(&self) -> usize {
        self.dim
    }

    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn accumulate_input(&self, word: u32, weight: f64, acc: &mut [f64]) {
        for (a, u) in acc.iter_mut().zip(self.input(word)) {
            *a += weight * u;
        }
    }

    fn accumulate_output(&self, word: u32, weight: f64, acc: &mut [f64]) {
        for (a, v) in acc.iter_mut().zip(self.output(word)) {
            *a += weight * v;
        }
    }

    fn output_dot(&self, word: u32, z: &[f64]) -> f64 {
        let mut s = 0.0;
        for (v, x) in self.output(word).iter().zip(z) {
            s += v * x;
        }
        s
    }
}

impl ParamUpdate for ModelParams {
    fn add_to_input(&mut self, word: u32, coef: f64, delta: &[f64]) {
        for (u, d) in self.input_mut(word).iter_mut().zip(delta) {
            *u += coef * d;
        }
    }

    fn add_to_output(&mut self, word: u32, coef: f64, delta: &[f64]) {
        for (v, d) in self.output_mut(word).iter_mut().zip(delta) {
            *v += coef * d;
        }
    }
}

/// How the local window's input vectors are combined.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Combiner {
    /// `U c`, one unit of weight per window position.
    #[default]
    Sum,
    /// Window average, as in the usual CBoW implementations.
    Mean,
}

/// Surviving global-context tokens; each contributes `scale / length`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GlobalContext<'a> {
    pub tokens: &'a [u32],
    pub scale: f64,
    pub length: usize,
}

impl GlobalContext<'_> {
    /// Weight of each surviving token in the hidden vector.
    pub fn token_weight(&self) -> f64 {
        self.scale / self.length as f64
    }
}

/// One prediction: a target word from its window and (optionally) the
/// corrupted document.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainingInstance<'a> {
    pub target: u32,
    /// Window words, target position excluded. Repeated words count once per
    /// occurrence.
    pub context: &'a [u32],
    pub combiner: Combiner,
    /// `None` disables the global term (plain CBoW).
    pub global: Option<GlobalContext<'a>>,
}

impl TrainingInstance<'_> {
    fn context_weight(&self) -> f64 {
        match self.combiner {
            Combiner::Sum => 1.0,
            Combiner::Mean => 1.0 / self.context.len() as f64,
        }
    }

    /// `(word, weight)` for every input column feeding the hidden vector,
    /// local context first.
    pub fn inputs(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        let cw = self.context_weight();
        let (tokens, gw) = match &self.global {
            Some(g) => (g.tokens, g.token_weight()),
            None => (&[][..], 0.0),
        };
        self.context
            .iter()
            .map(move |&w| (w, cw))
            .chain(tokens.iter().map(move |&w| (w, gw)))
    }

    fn is_degenerate(&self) -> bool {
        self.context.is_empty() && self.global.map_or(true, |g| g.tokens.is_empty())
    }
}

/// Writes the hidden vector `z = U c + (scale / T) sum_{surviving} u_w` into
/// `z`.
pub fn hidden_vector_into<P: ParamStore + ?Sized>(
    params: &P,
    instance: &TrainingInstance<'_>,
    z: &mut [f64],
) -> Result<()> {
    if instance.is_degenerate() {
        return Err(Error::DegenerateInstance);
    }
    z.fill(0.0);
    for (w, weight) in instance.inputs() {
        params.accumulate_input(w, weight, z);
    }
    Ok(())
}

pub fn hidden_vector<P: ParamStore + ?Sized>(params: &P, instance: &TrainingInstance<'_>) -> Result<Vec<f64>> {
    let mut z = vec![0.0; params.dim()];
    hidden_vector_into(params, instance, &mut z)?;
    Ok(z)
}

/// Loss and sparse gradients of one instance.
///
/// The gradient is kept in factored form: `dL/dv_w = g_w z` for every
/// scored output word and `dL/du_w = weight_w dL/dz` for every input column.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Gradients {
    pub loss: f64,
    /// Hidden vector `z`.
    pub hidden: Vec<f64>,
    /// `dL/dz`.
    pub hidden_grad: Vec<f64>,
    /// `(word, sigma(v_w . z) - label)`, target first.
    pub outputs: Vec<(u32, f64)>,
    /// `(word, weight)` of every input column, with repetition.
    pub inputs: Vec<(u32, f64)>,
}

impl Gradients {
    /// Dense `dL/dv_word`, summed over repeated occurrences.
    pub fn output_grad(&self, word: u32) -> Vec<f64> {
        let g: f64 = self.outputs.iter().filter(|o| o.0 == word).map(|o| o.1).sum();
        self.hidden.iter().map(|z| g * z).collect()
    }

    /// Dense `dL/du_word`, summed over repeated occurrences.
    pub fn input_grad(&self, word: u32) -> Vec<f64> {
        let w: f64 = self.inputs.iter().filter(|i| i.0 == word).map(|i| i.1).sum();
        self.hidden_grad.iter().map(|d| w * d).collect()
    }

    /// One plain SGD step: `v_w -= lr g_w z`, then `u_w -= lr weight dL/dz`.
    pub fn apply<P: ParamUpdate + ?Sized>(&self, lr: f64, params: &mut P) {
        for &(w, g) in &self.outputs {
            params.add_to_output(w, -(lr * g), &self.hidden);
        }
        for &(w, weight) in &self.inputs {
            params.add_to_input(w, -(lr * weight), &self.hidden_grad);
        }
    }
}

/// Negative log-likelihood under negative sampling:
/// `-log sigma(v_w . z) - sum_{w'} log sigma(-v_{w'} . z)`.
pub fn nll_and_grads<P: ParamStore + ?Sized>(
    params: &P,
    instance: &TrainingInstance<'_>,
    negatives: &[u32],
) -> Result<Gradients> {
    let mut grads = Gradients::default();
    nll_and_grads_into(params, instance, negatives, &mut grads)?;
    Ok(grads)
}

/// [`nll_and_grads`] writing into a reusable buffer.
pub fn nll_and_grads_into<P: ParamStore + ?Sized>(
    params: &P,
    instance: &TrainingInstance<'_>,
    negatives: &[u32],
    grads: &mut Gradients,
) -> Result<()> {
    let dim = params.dim();
    grads.hidden.resize(dim, 0.0);
    grads.hidden_grad.clear();
    grads.hidden_grad.resize(dim, 0.0);
    grads.outputs.clear();
    grads.inputs.clear();
    grads.inputs.extend(instance.inputs());

    hidden_vector_into(params, instance, &mut grads.hidden)?;

    let mut loss = 0.0;
    for (word, label) in std::iter::once((instance.target, 1.0)).chain(negatives.iter().map(|&w| (w, 0.0))) {
        let score = params.output_dot(word, &grads.hidden);
        loss += if label > 0.0 { softplus(-score) } else { softplus(score) };
        grads.outputs.push((word, sigmoid(score) - label));
    }
    if !loss.is_finite() {
        return Err(non_finite("loss", instance));
    }
    for &(word, g) in &grads.outputs {
        params.accumulate_output(word, g, &mut grads.hidden_grad);
    }
    grads.loss = loss;
    Ok(())
}

fn non_finite(what: &'static str, instance: &TrainingInstance<'_>) -> Error {
    Error::NonFinite {
        what,
        target: instance.target,
        context: instance.context.to_vec(),
    }
}

/// Distribution negatives are drawn from.
#[derive(Clone, Debug)]
pub enum NegSampleTable {
    Uniform { size: usize },
    Power {
        power: f64,
        probabilities: Vec<f64>,
        index: WeightedIndex<f64>,
    },
}

impl NegSampleTable {
    pub fn uniform(size: usize) -> Self {
        NegSampleTable::Uniform { size }
    }

    /// `P(w) ∝ count_w^power`; `power == 0` is the uniform table.
    pub fn from_counts(counts: &[u64], power: f64) -> Result<Self> {
        if !power.is_finite() || power < 0.0 {
            return Err(Error::param("neg_power", power, "must be finite and non-negative"));
        }
        if power == 0.0 {
            return Ok(Self::uniform(counts.len()));
        }
        let weights: Vec<f64> = counts.iter().map(|&c| (c as f64).powf(power)).collect();
        let total: f64 = weights.iter().sum();
        let index = WeightedIndex::new(&weights)
            .map_err(|e| Error::Mismatch(format!("negative-sampling table: {e}")))?;
        Ok(NegSampleTable::Power {
            power,
            probabilities: weights.iter().map(|w| w / total).collect(),
            index,
        })
    }

    pub fn len(&self) -> usize {
        match self {
            NegSampleTable::Uniform { size } => *size,
            NegSampleTable::Power { probabilities, .. } => probabilities.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn power(&self) -> f64 {
        match self {
            NegSampleTable::Uniform { .. } => 0.0,
            NegSampleTable::Power { power, .. } => *power,
        }
    }

    pub fn probabilities(&self) -> Vec<f64> {
        match self {
            NegSampleTable::Uniform { size } => vec![1.0 / *size as f64; *size],
            NegSampleTable::Power { probabilities, .. } => probabilities.clone(),
        }
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        match self {
            NegSampleTable::Uniform { size } => rng.gen_range(0..*size) as u32,
            NegSampleTable::Power { index, .. } => index.sample(rng) as u32,
        }
    }
}

/// `k` draws from `table`, redrawing any that hit `exclude`.
pub fn draw_negatives<R: Rng + ?Sized>(
    table: &NegSampleTable,
    k: usize,
    rng: &mut R,
    exclude: u32,
) -> Result<Vec<u32>> {
    let mut out = Vec::with_capacity(k);
    draw_negatives_into(table, k, rng, exclude, &mut out)?;
    Ok(out)
}

pub fn draw_negatives_into<R: Rng + ?Sized>(
    table: &NegSampleTable,
    k: usize,
    rng: &mut R,
    exclude: u32,
    out: &mut Vec<u32>,
) -> Result<()> {
    out.clear();
    if k == 0 {
        return Ok(());
    }
    if table.len() < 2 {
        return Err(Error::VocabularyTooSmall(table.len()));
    }
    while out.len() < k {
        let w = table.sample(rng);
        if w != exclude {
            out.push(w);
        }
    }
    Ok(())
}
