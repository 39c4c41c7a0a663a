// Minimal quaternion helpers (w-first, unit) for placement rotations.

export type Quat = [number, number, number, number];

export function quatMultiply(a: Quat, b: Quat): Quat {
  const [aw, ax, ay, az] = a;
  const [bw, bx, by, bz] = b;
  return [
    aw * bw - ax * bx - ay * by - az * bz,
    aw * bx + ax * bw + ay * bz - az * by,
    aw * by - ax * bz + ay * bw + az * bx,
    aw * bz + ax * by - ay * bx + az * bw,
  ];
}

export function quatFromAxisAngle(axis: [number, number, number], angle: number): Quat {
  const n = Math.hypot(axis[0], axis[1], axis[2]);
  if (n === 0) return [1, 0, 0, 0];
  const s = Math.sin(angle / 2) / n;
  return [Math.cos(angle / 2), axis[0] * s, axis[1] * s, axis[2] * s];
}

export function quatNormalize(q: Quat): Quat {
  const n = Math.hypot(q[0], q[1], q[2], q[3]);
  const sign = q[0] < 0 ? -1 : 1; // canonical: non-negative w
  return [ (sign * q[0]) / n, (sign * q[1]) / n, (sign * q[2]) / n, (sign * q[3]) / n ];
}

export function quatAngleBetween(a: Quat, b: Quat): number {
  // angle of the relative rotation a^-1 * b
  const inv: Quat = [a[0], -a[1], -a[2], -a[3]];
  const rel = quatMultiply(inv, b);
  const w = Math.min(1, Math.max(-1, Math.abs(rel[0])));
  return 2 * Math.acos(w);
}

export function quatRotate(q: Quat, v: [number, number, number]): [number, number, number] {
  const [w, x, y, z] = q;
  const uvx = y * v[2] - z * v[1];
  const uvy = z * v[0] - x * v[2];
  const uvz = x * v[1] - y * v[0];
  const uuvx = y * uvz - z * uvy;
  const uuvy = z * uvx - x * uvz;
  const uuvz = x * uvy - y * uvx;
  return [
    v[0] + 2 * (w * uvx + uuvx),
    v[1] + 2 * (w * uvy + uuvy),
    v[2] + 2 * (w * uvz + uuvz),
  ];
}
