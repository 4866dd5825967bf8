use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::NetworkConfig;
use crate::error::{Error, Result};
use crate::linalg::{complex_gaussian, real_scale_vec, CVec};

/// Independent random streams derived from one seed. Keeping them apart lets a
/// sweep change one parameter while reusing every other draw.
const STREAM_GEOMETRY: u64 = 0;
const STREAM_CACHE: u64 = 1;
const STREAM_REQUESTS: u64 = 2;

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Large-scale gain `1 / (1 + (d/d0)^alpha)`.
pub fn path_gain(distance: f64, reference: f64, exponent: f64) -> f64 {
    1.0 / (1.0 + (distance / reference).powf(exponent))
}

/// Binary placement `stored[f][i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct CacheState {
    num_files: usize,
    num_errhs: usize,
    stored: Vec<bool>,
}

impl CacheState {
    pub fn empty(num_files: usize, num_errhs: usize) -> Self {
        Self { num_files, num_errhs, stored: vec![false; num_files * num_errhs] }
    }

    pub fn full(num_files: usize, num_errhs: usize) -> Self {
        Self { num_files, num_errhs, stored: vec![true; num_files * num_errhs] }
    }

    pub fn num_files(&self) -> usize {
        self.num_files
    }

    pub fn num_errhs(&self) -> usize {
        self.num_errhs
    }

    pub fn is_cached(&self, file: usize, errh: usize) -> bool {
        self.stored[file * self.num_errhs + errh]
    }

    pub fn set(&mut self, file: usize, errh: usize, value: bool) {
        self.stored[file * self.num_errhs + errh] = value;
    }

    pub fn files_at(&self, errh: usize) -> usize {
        (0..self.num_files).filter(|&f| self.is_cached(f, errh)).count()
    }
}

/// Users partitioned by requested file; group `g` wants `files[g]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MulticastGroups {
    pub files: Vec<usize>,
    pub members: Vec<Vec<usize>>,
    pub group_of_user: Vec<usize>,
}

impl MulticastGroups {
    /// Groups from per-user requests, ordered by first appearance.
    pub fn from_requests(requests: &[usize]) -> Self {
        let mut files: Vec<usize> = Vec::new();
        let mut group_of_user = Vec::with_capacity(requests.len());
        for &f in requests {
            let g = match files.iter().position(|&x| x == f) {
                Some(g) => g,
                None => {
                    files.push(f);
                    files.len() - 1
                }
            };
            group_of_user.push(g);
        }
        let mut members = vec![Vec::new(); files.len()];
        for (k, &g) in group_of_user.iter().enumerate() {
            members[g].push(k);
        }
        Self { files, members, group_of_user }
    }

    pub fn len(&self) -> usize {
        self.files.len()
    }

    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }
}

/// One drawn network: geometry, channels, caches and requests.
#[derive(Clone, Debug)]
pub struct Instance {
    pub config: NetworkConfig,
    pub errh_positions: Vec<[f64; 2]>,
    pub user_positions: Vec<[f64; 2]>,
    /// Stacked channel of each user, eRRH-major: entries `i*N_t .. (i+1)*N_t` belong to eRRH `i`.
    pub channels: Vec<CVec>,
    pub cache: CacheState,
    pub requests: Vec<usize>,
    pub groups: MulticastGroups,
    pub seed: u64,
}

fn uniform_in_disk<R: Rng>(rng: &mut R, radius: f64) -> [f64; 2] {
    let r = radius * rng.gen::<f64>().sqrt();
    let a = 2.0 * std::f64::consts::PI * rng.gen::<f64>();
    [r * a.cos(), r * a.sin()]
}

impl Instance {
    /// Draw an instance. Geometry/channels, caches and requests use separate
    /// streams of `seed`; caches are nested in `cache_fraction` because each
    /// eRRH stores a prefix of one fixed random file permutation.
    pub fn generate(config: &NetworkConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let c = config;
        let mut geo = stream_rng(seed, STREAM_GEOMETRY);
        let errh_positions: Vec<[f64; 2]> =
            (0..c.num_errhs).map(|_| uniform_in_disk(&mut geo, c.cell_radius)).collect();
        let user_positions: Vec<[f64; 2]> =
            (0..c.num_users).map(|_| uniform_in_disk(&mut geo, c.cell_radius)).collect();
        let n = c.stacked_dim();
        let mut channels = Vec::with_capacity(c.num_users);
        for up in &user_positions {
            let mut h = CVec::zeros(n);
            for (i, ep) in errh_positions.iter().enumerate() {
                let d = ((up[0] - ep[0]).powi(2) + (up[1] - ep[1]).powi(2)).sqrt();
                let gain = path_gain(d, c.reference_distance, c.path_loss_exponent);
                let small = real_scale_vec(&complex_gaussian(&mut geo, c.antennas), gain.sqrt());
                h.rows_mut(i * c.antennas, c.antennas).copy_from(&small);
            }
            channels.push(h);
        }

        let mut cache_rng = stream_rng(seed, STREAM_CACHE);
        let per_errh = c.cached_files_per_errh();
        let mut cache = CacheState::empty(c.num_files, c.num_errhs);
        for i in 0..c.num_errhs {
            let mut order: Vec<usize> = (0..c.num_files).collect();
            order.shuffle(&mut cache_rng);
            for &f in order.iter().take(per_errh) {
                cache.set(f, i, true);
            }
        }

        let mut req_rng = stream_rng(seed, STREAM_REQUESTS);
        let requests = if c.balanced_groups {
            let files = index::sample(&mut req_rng, c.num_files, c.num_groups).into_vec();
            (0..c.num_users).map(|k| files[k % c.num_groups]).collect::<Vec<_>>()
        } else {
            let mut attempt = 0;
            loop {
                let req: Vec<usize> = (0..c.num_users).map(|_| req_rng.gen_range(0..c.num_files)).collect();
                let distinct = MulticastGroups::from_requests(&req).len();
                if !c.strict_group_count || distinct == c.num_groups {
                    break req;
                }
                attempt += 1;
                if attempt > 100_000 {
                    return Err(Error::InvalidConfig(format!(
                        "could not draw exactly {} distinct requests",
                        c.num_groups
                    )));
                }
            }
        };
        let groups = MulticastGroups::from_requests(&requests);
        let inst = Self { config: c.clone(), errh_positions, user_positions, channels, cache, requests, groups, seed };
        inst.validate()?;
        Ok(inst)
    }

    /// Assemble an instance from explicit channels, caches and requests.
    pub fn from_parts(config: NetworkConfig, channels: Vec<CVec>, cache: CacheState, requests: Vec<usize>) -> Result<Self> {
        config.validate()?;
        let groups = MulticastGroups::from_requests(&requests);
        let inst = Self {
            errh_positions: vec![[0.0, 0.0]; config.num_errhs],
            user_positions: vec![[0.0, 0.0]; config.num_users],
            config,
            channels,
            cache,
            requests,
            groups,
            seed: 0,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.config;
        let bad = |m: String| Err(Error::InvalidInstance(m));
        if self.channels.len() != c.num_users || self.requests.len() != c.num_users {
            return bad("one channel and one request per user required".into());
        }
        if self.channels.iter().any(|h| h.len() != c.stacked_dim()) {
            return bad(format!("channels must have length num_errhs * antennas = {}", c.stacked_dim()));
        }
        if self.channels.iter().any(|h| h.iter().any(|z| !z.re.is_finite() || !z.im.is_finite())) {
            return bad("channels must be finite".into());
        }
        if self.cache.num_files() != c.num_files || self.cache.num_errhs() != c.num_errhs {
            return bad("cache dimensions disagree with the configuration".into());
        }
        if self.requests.iter().any(|&f| f >= c.num_files) {
            return bad("request index out of range".into());
        }
        let cap_files = c.cache_fraction * c.num_files as f64 + 1e-9;
        for i in 0..c.num_errhs {
            if self.cache.files_at(i) as f64 > cap_files {
                return bad(format!("eRRH {i} stores more than floor(xi F) files"));
            }
        }
        Ok(())
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn num_users(&self) -> usize {
        self.config.num_users
    }

    pub fn num_errhs(&self) -> usize {
        self.config.num_errhs
    }

    pub fn antennas(&self) -> usize {
        self.config.antennas
    }

    pub fn stacked_dim(&self) -> usize {
        self.config.stacked_dim()
    }

    pub fn power(&self) -> f64 {
        self.config.power_linear()
    }

    /// Whether group `g`'s file is held by eRRH `i`.
    pub fn cached(&self, g: usize, i: usize) -> bool {
        self.cache.is_cached(self.groups.files[g], i)
    }

    /// Number of groups whose file eRRH `i` must fetch over its fronthaul.
    pub fn fetch_count(&self, i: usize) -> usize {
        (0..self.num_groups()).filter(|&g| !self.cached(g, i)).count()
    }

    /// eRRHs with at least one requested file to fetch.
    pub fn fetching_errhs(&self) -> Vec<usize> {
        (0..self.num_errhs()).filter(|&i| self.fetch_count(i) > 0).collect()
    }

    /// eRRHs holding group `g`'s file.
    pub fn caching_errhs(&self, g: usize) -> Vec<usize> {
        (0..self.num_errhs()).filter(|&i| self.cached(g, i)).collect()
    }

    pub fn all_requested_cached(&self) -> bool {
        self.fetching_errhs().is_empty()
    }

    pub fn with_cache(&self, cache: CacheState) -> Self {
        let mut out = self.clone();
        out.cache = cache;
        out
    }

    pub fn with_empty_cache(&self) -> Self {
        self.with_cache(CacheState::empty(self.config.num_files, self.config.num_errhs))
    }

    pub fn with_full_cache(&self) -> Self {
        let mut out = self.with_cache(CacheState::full(self.config.num_files, self.config.num_errhs));
        out.config.cache_fraction = 1.0;
        out
    }

    /// Rows of the stacked vector that belong to eRRH `i`.
    pub fn block(&self, i: usize) -> std::ops::Range<usize> {
        let nt = self.antennas();
        i * nt..(i + 1) * nt
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_instance_shapes() {
        let inst = Instance::generate(&NetworkConfig::default(), 7).unwrap();
        assert_eq!(inst.channels.len(), 6);
        assert_eq!(inst.num_groups(), 3);
        for i in 0..3 {
            assert_eq!(inst.cache.files_at(i), 5);
        }
        for p in inst.errh_positions.iter().chain(&inst.user_positions) {
            assert!((p[0] * p[0] + p[1] * p[1]).sqrt() <= 500.0);
        }
    }

    #[test]
    fn same_seed_same_instance() {
        let a = Instance::generate(&NetworkConfig::default(), 11).unwrap();
        let b = Instance::generate(&NetworkConfig::default(), 11).unwrap();
        assert_eq!(a.channels, b.channels);
        assert_eq!(a.cache, b.cache);
        assert_eq!(a.requests, b.requests);
    }

    #[test]
    fn caches_nest_across_fractions() {
        let mut small = NetworkConfig::default();
        small.cache_fraction = 0.2;
        let mut large = small.clone();
        large.cache_fraction = 0.7;
        let a = Instance::generate(&small, 5).unwrap();
        let b = Instance::generate(&large, 5).unwrap();
        assert_eq!(a.channels, b.channels);
        assert_eq!(a.requests, b.requests);
        for f in 0..10 {
            for i in 0..3 {
                assert!(!a.cache.is_cached(f, i) || b.cache.is_cached(f, i));
            }
        }
    }

    #[test]
    fn strict_random_requests_hit_group_count() {
        let c = NetworkConfig { balanced_groups: false, ..Default::default() };
        for seed in 0..20 {
            assert_eq!(Instance::generate(&c, seed).unwrap().num_groups(), 3);
        }
    }

    #[test]
    fn path_gain_at_reference_distance_is_half() {
        assert!((path_gain(50.0, 50.0, 3.0) - 0.5).abs() < 1e-15);
    }
}
