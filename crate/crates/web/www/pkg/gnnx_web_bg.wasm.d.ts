/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_demo_free: (a: number, b: number) => void;
export const demo_explain: (a: number, b: number) => [number, number, number, number];
export const demo_graph: (a: number) => [number, number];
export const demo_new: (a: number, b: number) => [number, number, number];
export const demo_nodes: (a: number) => [number, number];
export const demo_setThreshold: (a: number, b: number) => [number, number, number, number];
export const demo_train: (a: number, b: number, c: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
