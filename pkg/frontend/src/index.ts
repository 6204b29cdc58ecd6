export * from './protocol.js';
export * from './transport.js';
export * from './client.js';
export * from './labeling.js';
export * from './pagetext.js';
export * from './content.js';
export * from './sidebar.js';
