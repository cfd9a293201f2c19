use crate::geometry::{CameraIntrinsics, EulerAngles, Point3, RigidTransform};

use super::TransportError;

pub const HELLO_LEN: usize = 27;
pub const FEEDBACK_LEN: usize = 36;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Role {
    Operation = 0,
    Mentor = 1,
}

/// Little-endian cursor over a payload; every read is bounds-checked.
struct Reader<'a> {
    kind: &'static str,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(kind: &'static str, bytes: &'a [u8]) -> Self {
        Self {
            kind,
            bytes,
            pos: 0,
        }
    }

    fn err(&self, reason: impl Into<String>) -> TransportError {
        TransportError::Payload {
            kind: self.kind,
            reason: reason.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], TransportError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(self.err(format!(
                "needs {n} bytes at offset {}, have {}",
                self.pos,
                self.bytes.len()
            ))),
        }
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], TransportError> {
        Ok(self.take(N)?.try_into().expect("take returned N bytes"))
    }

    fn u8(&mut self) -> Result<u8, TransportError> {
        Ok(self.array::<1>()?[0])
    }
    fn u16(&mut self) -> Result<u16, TransportError> {
        Ok(u16::from_le_bytes(self.array()?))
    }
    fn u32(&mut self) -> Result<u32, TransportError> {
        Ok(u32::from_le_bytes(self.array()?))
    }
    fn u64(&mut self) -> Result<u64, TransportError> {
        Ok(u64::from_le_bytes(self.array()?))
    }
    fn f32(&mut self) -> Result<f32, TransportError> {
        Ok(f32::from_le_bytes(self.array()?))
    }

    fn finish(self) -> Result<(), TransportError> {
        if self.pos == self.bytes.len() {
            Ok(())
        } else {
            Err(self.err(format!("{} trailing bytes", self.bytes.len() - self.pos)))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HelloPayload {
    pub version: u16,
    pub role: Role,
    pub width: u16,
    pub height: u16,
    pub f: f32,
    pub b: f32,
    pub cx: f32,
    pub cy: f32,
    pub disparity_prescale: f32,
}

impl HelloPayload {
    pub fn new(version: u16, role: Role, intr: &CameraIntrinsics, disparity_prescale: f32) -> Self {
        Self {
            version,
            role,
            width: intr.width as u16,
            height: intr.height as u16,
            f: intr.f as f32,
            b: intr.b as f32,
            cx: intr.cx as f32,
            cy: intr.cy as f32,
            disparity_prescale,
        }
    }

    pub fn intrinsics(&self) -> Result<CameraIntrinsics, TransportError> {
        CameraIntrinsics::new(
            self.f as f64,
            self.b as f64,
            self.cx as f64,
            self.cy as f64,
            self.width as u32,
            self.height as u32,
        )
        .map_err(|e| TransportError::Payload {
            kind: "HELLO",
            reason: e.to_string(),
        })
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HELLO_LEN);
        out.extend_from_slice(&self.version.to_le_bytes());
        out.push(self.role as u8);
        out.extend_from_slice(&self.width.to_le_bytes());
        out.extend_from_slice(&self.height.to_le_bytes());
        for v in [self.f, self.b, self.cx, self.cy, self.disparity_prescale] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, TransportError> {
        let mut r = Reader::new("HELLO", bytes);
        let version = r.u16()?;
        let role = match r.u8()? {
            0 => Role::Operation,
            1 => Role::Mentor,
            other => return Err(r.err(format!("unknown role {other}"))),
        };
        let hello = Self {
            version,
            role,
            width: r.u16()?,
            height: r.u16()?,
            f: r.f32()?,
            b: r.f32()?,
            cx: r.f32()?,
            cy: r.f32()?,
            disparity_prescale: r.f32()?,
        };
        r.finish()?;
        hello.intrinsics()?;
        if !(hello.disparity_prescale.is_finite() && hello.disparity_prescale > 0.0) {
            return Err(TransportError::Payload {
                kind: "HELLO",
                reason: "disparity_prescale must be > 0".into(),
            });
        }
        Ok(hello)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FramePayload {
    pub capture_timestamp_us: u64,
    pub disparity_stage_us: u32,
    pub encode_stage_us: u32,
    pub rgb: Vec<u8>,
    pub ifp: Vec<u8>,
}

impl FramePayload {
    pub fn encoded_len(&self) -> usize {
        24 + self.rgb.len() + self.ifp.len()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(&self.capture_timestamp_us.to_le_bytes());
        out.extend_from_slice(&self.disparity_stage_us.to_le_bytes());
        out.extend_from_slice(&self.encode_stage_us.to_le_bytes());
        out.extend_from_slice(&(self.rgb.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.rgb);
        out.extend_from_slice(&(self.ifp.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.ifp);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, TransportError> {
        let mut r = Reader::new("FRAME", bytes);
        let capture_timestamp_us = r.u64()?;
        let disparity_stage_us = r.u32()?;
        let encode_stage_us = r.u32()?;
        let rgb_len = r.u32()? as usize;
        let rgb = r.take(rgb_len)?.to_vec();
        let ifp_len = r.u32()? as usize;
        let ifp = r.take(ifp_len)?.to_vec();
        r.finish()?;
        Ok(Self {
            capture_timestamp_us,
            disparity_stage_us,
            encode_stage_us,
            rgb,
            ifp,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeedbackKind {
    Pointer = 0,
    Needle = 1,
    Trajectory = 2,
}

impl FeedbackKind {
    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(Self::Pointer),
            1 => Some(Self::Needle),
            2 => Some(Self::Trajectory),
            _ => None,
        }
    }
}

/// Mentor guidance in the camera frame {C}: a pose (angles in radians,
/// position in metres) plus what kind of guidance it is.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FeedbackMessage {
    pub m: u8,
    pub i: u8,
    pub stroke_id: u16,
    pub yaw: f32,
    pub pitch: f32,
    pub roll: f32,
    pub x: f32,
    pub y: f32,
    pub z: f32,
    pub based_on_seq: u64,
}

impl FeedbackMessage {
    pub fn clear(based_on_seq: u64) -> Self {
        Self {
            based_on_seq,
            ..Self::default()
        }
    }

    pub fn pointer(p: Point3, based_on_seq: u64) -> Self {
        Self::with_pose(
            FeedbackKind::Pointer,
            0,
            EulerAngles::default(),
            p,
            based_on_seq,
        )
    }

    pub fn needle(pose: &RigidTransform, based_on_seq: u64) -> Self {
        let angles = crate::geometry::rotation_to_euler(&pose.rotation).angles;
        let t = pose.translation;
        Self::with_pose(FeedbackKind::Needle, 0, angles, t, based_on_seq)
    }

    pub fn trajectory_vertex(stroke_id: u16, p: Point3, based_on_seq: u64) -> Self {
        Self::with_pose(
            FeedbackKind::Trajectory,
            stroke_id,
            EulerAngles::default(),
            p,
            based_on_seq,
        )
    }

    pub fn with_pose(
        kind: FeedbackKind,
        stroke_id: u16,
        a: EulerAngles,
        p: Point3,
        based_on_seq: u64,
    ) -> Self {
        Self {
            m: 1,
            i: kind as u8,
            stroke_id,
            yaw: a.yaw as f32,
            pitch: a.pitch as f32,
            roll: a.roll as f32,
            x: p.x as f32,
            y: p.y as f32,
            z: p.z as f32,
            based_on_seq,
        }
    }

    pub fn kind(&self) -> Option<FeedbackKind> {
        FeedbackKind::from_byte(self.i)
    }

    pub fn is_clear(&self) -> bool {
        self.m == 0
    }

    pub fn position(&self) -> Point3 {
        Point3::new(self.x as f64, self.y as f64, self.z as f64)
    }

    pub fn angles(&self) -> EulerAngles {
        EulerAngles {
            yaw: self.yaw as f64,
            pitch: self.pitch as f64,
            roll: self.roll as f64,
        }
    }

    pub fn pose(&self) -> RigidTransform {
        RigidTransform::new(
            crate::geometry::euler_to_rotation(self.angles()),
            self.position(),
        )
    }

    fn pose_fields(&self) -> [f32; 6] {
        [self.yaw, self.pitch, self.roll, self.x, self.y, self.z]
    }

    pub fn validate(&self) -> Result<(), TransportError> {
        let bad = |reason: String| TransportError::Payload {
            kind: "FEEDBACK",
            reason,
        };
        match self.m {
            0 => {
                if self.pose_fields().iter().any(|&v| v != 0.0) {
                    return Err(bad("clear message must carry a zero pose".into()));
                }
            }
            1 => {
                if self.kind().is_none() {
                    return Err(bad(format!("unknown guidance kind {}", self.i)));
                }
                if !self.pose_fields().iter().all(|v| v.is_finite()) {
                    return Err(bad("pose fields must be finite".into()));
                }
            }
            other => {
                return Err(bad(format!(
                    "availability flag must be 0 or 1, got {other}"
                )))
            }
        }
        Ok(())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(FEEDBACK_LEN);
        out.push(self.m);
        out.push(self.i);
        out.extend_from_slice(&self.stroke_id.to_le_bytes());
        for v in self.pose_fields() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&self.based_on_seq.to_le_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, TransportError> {
        let mut r = Reader::new("FEEDBACK", bytes);
        let msg = Self {
            m: r.u8()?,
            i: r.u8()?,
            stroke_id: r.u16()?,
            yaw: r.f32()?,
            pitch: r.f32()?,
            roll: r.f32()?,
            x: r.f32()?,
            y: r.f32()?,
            z: r.f32()?,
            based_on_seq: r.u64()?,
        };
        r.finish()?;
        msg.validate()?;
        Ok(msg)
    }
}
